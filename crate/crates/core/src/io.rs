//! File formats: JSON reports with fixed 17-significant-digit floats, CSV
//! snapshot dumps, and the record directory layout.
//!
//! A record directory holds `u.csv`, `w.csv`, `p.csv`, `acc.csv` (one row per
//! snapshot: `t` then one column per stored node) and `record.json` with
//! everything else.

use std::io::Write;
use std::path::Path;

use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::model::{ModelConstants, ModelParams};
use crate::relay::RelayKind;
use crate::solver::{GridSpec, IgnitionStencil, RunOptions, SolutionRecord, T1Scan};

/// Pretty JSON with every float written as `{:.16e}`.
struct Fixed17<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Deterministic JSON text. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Every report file carries the effective config and schema version.
#[derive(Debug, Clone, SerializeDerive, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub report: T,
}

impl<T> Envelope<T> {
    pub fn new(command: &str, config: &RunConfig, report: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config: config.clone(),
            report,
        }
    }
}

/// CSV float formatting; round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header `t,x_0,...` followed by one row per snapshot.
pub fn snapshots_csv(x: &[f64], times: &[f64], rows: &[Vec<f64>]) -> String {
    let mut s = String::from("t");
    for xi in x {
        s.push(',');
        s += &fmt_f64(*xi);
    }
    s.push('\n');
    for (t, row) in times.iter().zip(rows) {
        s += &fmt_f64(*t);
        for v in row {
            s.push(',');
            s += &fmt_f64(*v);
        }
        s.push('\n');
    }
    s
}

/// Inverse of [`snapshots_csv`]: `(x, times, rows)`.
pub fn parse_snapshots_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: String| Error::Parse {
        line: line + 1,
        key: None,
        message,
    };
    let (_, header) = lines.next().ok_or_else(|| bad(0, "empty CSV".into()))?;
    let mut cols = header.split(',');
    if cols.next() != Some("t") {
        return Err(bad(0, "first header column must be `t`".into()));
    }
    let x = cols
        .map(|c| c.parse::<f64>().map_err(|e| bad(0, format!("{c:?}: {e}"))))
        .collect::<Result<Vec<f64>>>()?;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|e| bad(n, format!("{c:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != x.len() + 1 {
            return Err(bad(
                n,
                format!("expected {} columns, found {}", x.len() + 1, vals.len()),
            ));
        }
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    Ok((x, times, rows))
}

/// Stencil with `NaN` entries stored as `null`.
#[derive(Debug, Clone, SerializeDerive, Deserialize)]
struct StoredStencil {
    t: f64,
    lags: [f64; 5],
    u_time: [f64; 5],
    u_space: [Option<f64>; 5],
}

impl From<&IgnitionStencil> for StoredStencil {
    fn from(s: &IgnitionStencil) -> Self {
        Self {
            t: s.t,
            lags: s.lags,
            u_time: s.u_time,
            u_space: s.u_space.map(|v| v.is_finite().then_some(v)),
        }
    }
}

impl From<StoredStencil> for IgnitionStencil {
    fn from(s: StoredStencil) -> Self {
        Self {
            t: s.t,
            lags: s.lags,
            u_time: s.u_time,
            u_space: s.u_space.map(|v| v.unwrap_or(f64::NAN)),
        }
    }
}

#[derive(Debug, Clone, SerializeDerive, Deserialize)]
struct RecordMeta {
    schema_version: u32,
    params: ModelParams,
    constants: Option<ModelConstants>,
    grid: GridSpec,
    relay: RelayKind,
    options: RunOptions,
    ignition_time: Vec<Option<f64>>,
    stencils: Vec<Option<StoredStencil>>,
    t1_scan: Option<T1Scan>,
}

const FIELDS: [&str; 4] = ["u", "w", "p", "acc"];

pub fn write_record(dir: &Path, record: &SolutionRecord) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let fields = [&record.u, &record.w, &record.p, &record.accumulator];
    for (name, rows) in FIELDS.iter().zip(fields) {
        std::fs::write(
            dir.join(format!("{name}.csv")),
            snapshots_csv(&record.x, &record.times, rows),
        )?;
    }
    let meta = RecordMeta {
        schema_version: SCHEMA_VERSION,
        params: record.params,
        constants: record.constants,
        grid: record.grid,
        relay: record.relay,
        options: record.options,
        ignition_time: record.ignition_time.clone(),
        stencils: record
            .stencils
            .iter()
            .map(|s| s.as_ref().map(StoredStencil::from))
            .collect(),
        t1_scan: record.t1_scan,
    };
    write_json(&dir.join("record.json"), &meta)
}

pub fn read_record(dir: &Path) -> Result<SolutionRecord> {
    let meta: RecordMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join("record.json"))?)?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(Error::Validation(vec![format!(
            "record schema_version {} is not supported",
            meta.schema_version
        )]));
    }
    let mut parsed = Vec::with_capacity(FIELDS.len());
    for name in FIELDS {
        parsed.push(parse_snapshots_csv(&std::fs::read_to_string(
            dir.join(format!("{name}.csv")),
        )?)?);
    }
    let (x, times, _) = &parsed[0];
    for (name, (x2, t2, _)) in FIELDS.iter().zip(&parsed) {
        if x2 != x || t2 != times {
            return Err(Error::GridMismatch(format!(
                "{name}.csv disagrees with u.csv"
            )));
        }
    }
    let (x, times) = (x.clone(), times.clone());
    let mut fields = parsed.into_iter().map(|(_, _, rows)| rows);
    Ok(SolutionRecord {
        params: meta.params,
        constants: meta.constants,
        grid: meta.grid,
        relay: meta.relay,
        options: meta.options,
        x,
        times,
        u: fields.next().unwrap(),
        w: fields.next().unwrap(),
        p: fields.next().unwrap(),
        accumulator: fields.next().unwrap(),
        ignition_time: meta.ignition_time,
        stencils: meta
            .stencils
            .into_iter()
            .map(|s| s.map(IgnitionStencil::from))
            .collect(),
        t1_scan: meta.t1_scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::run;

    #[test]
    fn floats_have_17_digits() {
        let s = to_json(&[0.1f64, 1.0 / 3.0]).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 1.0 / 3.0]);
    }

    #[test]
    fn csv_round_trip() {
        let x = vec![0.0, 0.5];
        let t = vec![0.0, 1e-3];
        let rows = vec![vec![1.0 / 7.0, -2.5e-300], vec![0.0, 3.0]];
        let (x2, t2, r2) = parse_snapshots_csv(&snapshots_csv(&x, &t, &rows)).unwrap();
        assert_eq!((x, t, rows), (x2, t2, r2));
    }

    #[test]
    fn record_round_trip() {
        let p = ModelParams::with_threshold_fraction(1.0, 1.0, 0.8).unwrap();
        let g = GridSpec::new(0.02, 1e-4, 1.0, 0.02).unwrap();
        let rec = run(&p, &g, RelayKind::Sharp, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_record(dir.path(), &rec).unwrap();
        let back = read_record(dir.path()).unwrap();
        assert_eq!(back.u, rec.u);
        assert_eq!(back.w, rec.w);
        assert_eq!(back.ignition_time, rec.ignition_time);
        assert_eq!(back.constants, rec.constants);
        assert_eq!(back.stencils.len(), rec.stencils.len());
        for (a, b) in back.stencils.iter().zip(&rec.stencils) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    assert_eq!(a.u_time, b.u_time);
                    for j in 0..5 {
                        assert!(
                            a.u_space[j] == b.u_space[j]
                                || (a.u_space[j].is_nan() && b.u_space[j].is_nan())
                        );
                    }
                }
                (None, None) => {}
                _ => panic!("stencil presence differs"),
            }
        }
    }

    #[test]
    fn csv_column_mismatch() {
        assert!(matches!(
            parse_snapshots_csv("t,0.0,1.0\n0.0,1.0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
