//! Run configuration: a TOML file with model keys at the top level and
//! optional sections for everything else.
//!
//! ```toml
//! schema_version = 1
//! alpha = 1.0
//! beta = 1.0
//! u_star_fraction = 0.8      # or u_star = ...
//!
//! [grid]                     # dx, dt, x_max, t_max
//! [relay]                    # kind = "sharp" | "mollified" | "property_p", epsilon
//! [run]                      # snapshot_stride, store_x_max, scheme
//! [output]                   # dir
//! [probes]                   # points = [[x, t], ...]
//! [tolerances]               # measure_tol, jump_factor, slope_floor, rate_floor, agreement_factor
//! [toy]                      # forcing, value, horizon, dt
//! [sweep]                    # epsilons, grid_refinement
//! ```
//!
//! Unknown keys are rejected. Missing sections take the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DEFAULT_RATE_FLOOR, DEFAULT_SLOPE_FLOOR};
use crate::error::{Error, Result};
use crate::front::DEFAULT_JUMP_FACTOR;
use crate::harness::{Perturbation, SweepBase, AGREEMENT_FACTOR};
use crate::model::{ModelConstants, ModelParams};
use crate::relay::RelayKind;
use crate::solver::{GridSpec, RunOptions, Scheme};
use crate::toy::{Forcing, ToyConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DX: f64 = 2.5e-3;
pub const DEFAULT_DT: f64 = 2.5e-6;
pub const DEFAULT_OUT_DIR: &str = "hhmo-out";
pub const OUT_DIR_ENV: &str = "HHMO_OUT_DIR";

/// Interior probes `(x, t)` for the Duhamel identity.
pub const DEFAULT_PROBES: [[f64; 2]; 10] = [
    [0.05, 0.09],
    [0.1, 0.09],
    [0.15, 0.09],
    [0.2, 0.09],
    [0.25, 0.09],
    [0.05, 0.12],
    [0.1, 0.12],
    [0.15, 0.12],
    [0.2, 0.12],
    [0.25, 0.12],
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_star_fraction: Option<f64>,
    #[serde(default)]
    pub grid: RawGrid,
    #[serde(default)]
    pub relay: RawRelay,
    #[serde(default)]
    pub run: RawRun,
    #[serde(default)]
    pub output: RawOutput,
    #[serde(default)]
    pub probes: RawProbes,
    #[serde(default)]
    pub tolerances: RawTolerances,
    #[serde(default)]
    pub toy: RawToy,
    #[serde(default)]
    pub sweep: RawSweep,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub x_max: Option<f64>,
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRelay {
    pub kind: Option<String>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub snapshot_stride: Option<usize>,
    pub store_x_max: Option<f64>,
    pub scheme: Option<Scheme>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProbes {
    pub points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTolerances {
    pub measure_tol: Option<f64>,
    pub jump_factor: Option<f64>,
    pub slope_floor: Option<f64>,
    pub rate_floor: Option<f64>,
    pub agreement_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawToy {
    pub forcing: Option<String>,
    pub value: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub epsilons: Option<Vec<f64>>,
    pub grid_refinement: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub measure_tol: f64,
    pub jump_factor: f64,
    pub slope_floor: f64,
    pub rate_floor: f64,
    pub agreement_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            measure_tol: 0.0,
            jump_factor: DEFAULT_JUMP_FACTOR,
            slope_floor: DEFAULT_SLOPE_FLOOR,
            rate_floor: DEFAULT_RATE_FLOOR,
            agreement_factor: AGREEMENT_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub epsilons: Vec<f64>,
    pub grid_refinement: bool,
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub params: ModelParams,
    pub grid: GridSpec,
    pub relay: RelayKind,
    pub options: RunOptions,
    pub out_dir: PathBuf,
    pub probes: Vec<(f64, f64)>,
    pub tolerances: Tolerances,
    pub toy: ToyConfig,
    pub sweep: SweepSpec,
}

/// Line (1-based) containing byte `offset` of `text`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn parse_error(text: &str, err: toml::de::Error) -> Error {
    let line = err.span().map_or(0, |s| line_of(text, s.start));
    let message = err.message().trim().to_string();
    let key = backticked(&message).or_else(|| {
        err.span().and_then(|s| {
            let src = text.get(s.clone())?;
            let k = src.split('=').next()?.trim();
            (!k.is_empty() && !k.contains('\n')).then(|| k.to_string())
        })
    });
    Error::Parse { line, key, message }
}

/// Parses TOML text without validation.
pub fn parse_raw(text: &str) -> Result<RawConfig> {
    toml::from_str(text).map_err(|e| parse_error(text, e))
}

/// Parses and validates a config file's text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    resolve(&parse_raw(text)?)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn positive(problems: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        problems.push(format!("{name} must be positive and finite, got {v}"));
    }
}

/// Fills defaults and reports every violation at once.
pub fn resolve(raw: &RawConfig) -> Result<RunConfig> {
    let mut problems = Vec::new();
    let schema_version = raw.schema_version.unwrap_or(SCHEMA_VERSION);
    if schema_version != SCHEMA_VERSION {
        problems.push(format!(
            "schema_version {schema_version} is not supported (expected {SCHEMA_VERSION})"
        ));
    }
    let alpha = raw.alpha.unwrap_or(1.0);
    let beta = raw.beta.unwrap_or(1.0);
    positive(&mut problems, "alpha", alpha);
    positive(&mut problems, "beta", beta);
    let mut params = None;
    if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
        let probe = ModelParams {
            alpha,
            beta,
            u_star: 0.0,
        };
        let psi_alpha = probe.psi_alpha();
        let u_star = match (raw.u_star, raw.u_star_fraction) {
            (Some(_), Some(_)) => {
                problems.push("give either u_star or u_star_fraction, not both".into());
                None
            }
            (Some(u), None) => Some(u),
            (None, f) => {
                let f = f.unwrap_or(0.8);
                if !(f > 0.0 && f < 1.0) {
                    problems.push(format!(
                        "u_star_fraction = {f} is not supercritical (need 0 < fraction < 1)"
                    ));
                    None
                } else {
                    Some(f * psi_alpha)
                }
            }
        };
        if let Some(u_star) = u_star {
            let p = ModelParams {
                alpha,
                beta,
                u_star,
            };
            if !(u_star > 0.0) {
                problems.push(format!("u_star must be positive, got {u_star}"));
            } else if !p.is_supercritical() {
                problems.push(format!(
                    "u_star = {u_star} is not supercritical (Psi(alpha) = {psi_alpha})"
                ));
            } else {
                params = Some(p);
            }
        }
    }

    let default_grid = params
        .and_then(|p| ModelConstants::compute(&p, None).ok())
        .and_then(|c| GridSpec::default_for(&c).ok());
    let g = &raw.grid;
    let dx = g.dx.unwrap_or(DEFAULT_DX);
    let dt = g.dt.unwrap_or(DEFAULT_DT);
    let x_max = g.x_max.or(default_grid.map(|d| d.x_max)).unwrap_or(6.0);
    let t_max = g.t_max.or(default_grid.map(|d| d.t_max)).unwrap_or(0.25);
    let grid = GridSpec::new(dx, dt, x_max, t_max);
    if let Err(Error::Validation(v)) = &grid {
        problems.extend(v.iter().map(|m| format!("grid.{m}")));
    }

    let relay = match raw.relay.kind.as_deref().unwrap_or("sharp") {
        "sharp" => Some(RelayKind::Sharp),
        "property_p" => Some(RelayKind::PropertyP),
        "mollified" => {
            let epsilon = raw.relay.epsilon.unwrap_or(1e-3);
            positive(&mut problems, "relay.epsilon", epsilon);
            Some(RelayKind::Mollified { epsilon })
        }
        other => {
            problems.push(format!(
                "relay.kind = {other:?} is not one of \"sharp\", \"mollified\", \"property_p\""
            ));
            None
        }
    };
    if raw.relay.epsilon.is_some() && !matches!(relay, Some(RelayKind::Mollified { .. })) {
        problems.push("relay.epsilon only applies to kind = \"mollified\"".into());
    }

    let stride = raw.run.snapshot_stride.unwrap_or(100);
    if stride == 0 {
        problems.push("run.snapshot_stride must be at least 1".into());
    }
    if let Some(s) = raw.run.store_x_max {
        positive(&mut problems, "run.store_x_max", s);
    }
    let options = RunOptions {
        scheme: raw.run.scheme.unwrap_or(Scheme::Deficit),
        snapshot_stride: stride,
        store_x_max: raw.run.store_x_max,
        ..RunOptions::default()
    };

    let probes: Vec<(f64, f64)> = raw
        .probes
        .points
        .clone()
        .unwrap_or_else(|| DEFAULT_PROBES.to_vec())
        .into_iter()
        .map(|[x, t]| (x, t))
        .collect();
    for &(x, t) in &probes {
        if !(x >= 0.0 && x.is_finite() && t > 0.0 && t.is_finite()) {
            problems.push(format!("probe ({x}, {t}) needs x >= 0 and t > 0"));
        }
    }

    let d = Tolerances::default();
    let rt = &raw.tolerances;
    let tolerances = Tolerances {
        measure_tol: rt.measure_tol.unwrap_or(d.measure_tol),
        jump_factor: rt.jump_factor.unwrap_or(d.jump_factor),
        slope_floor: rt.slope_floor.unwrap_or(d.slope_floor),
        rate_floor: rt.rate_floor.unwrap_or(d.rate_floor),
        agreement_factor: rt.agreement_factor.unwrap_or(d.agreement_factor),
    };
    if !(tolerances.measure_tol >= 0.0 && tolerances.measure_tol < 1.0) {
        problems.push(format!(
            "tolerances.measure_tol must lie in [0, 1), got {}",
            tolerances.measure_tol
        ));
    }
    positive(
        &mut problems,
        "tolerances.jump_factor",
        tolerances.jump_factor,
    );
    positive(
        &mut problems,
        "tolerances.slope_floor",
        tolerances.slope_floor,
    );
    positive(
        &mut problems,
        "tolerances.rate_floor",
        tolerances.rate_floor,
    );
    positive(
        &mut problems,
        "tolerances.agreement_factor",
        tolerances.agreement_factor,
    );

    let forcing = match raw.toy.forcing.as_deref().unwrap_or("constant") {
        "constant" => Some(Forcing::Constant {
            value: raw.toy.value.unwrap_or(0.5),
        }),
        "linear" => {
            if raw.toy.value.is_some() {
                problems.push("toy.value only applies to forcing = \"constant\"".into());
            }
            Some(Forcing::Linear)
        }
        other => {
            problems.push(format!(
                "toy.forcing = {other:?} is not \"constant\" or \"linear\""
            ));
            None
        }
    };
    let toy = forcing.and_then(|f| {
        ToyConfig::new(
            f,
            raw.toy.horizon.unwrap_or(1.0),
            raw.toy.dt.unwrap_or(1e-4),
        )
        .map_err(|e| {
            if let Error::Validation(v) = e {
                problems.extend(v);
            }
        })
        .ok()
    });

    let sweep = SweepSpec {
        epsilons: raw
            .sweep
            .epsilons
            .clone()
            .unwrap_or_else(|| vec![1e-3, 5e-4, 2.5e-4]),
        grid_refinement: raw.sweep.grid_refinement.unwrap_or(true),
    };
    for &e in &sweep.epsilons {
        positive(&mut problems, "sweep.epsilons[]", e);
    }

    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    Ok(RunConfig {
        schema_version,
        params: params.expect("validated"),
        grid: grid.expect("validated"),
        relay: relay.expect("validated"),
        options,
        out_dir: raw
            .output
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        probes,
        tolerances,
        toy: toy.expect("validated"),
        sweep,
    })
}

impl RunConfig {
    /// Defaults for `alpha = beta = 1`, `u* = 0.8 Psi(1)`.
    pub fn default_config() -> Self {
        resolve(&RawConfig::default()).expect("defaults are valid")
    }

    /// Fully explicit raw form; parsing it back yields `self`.
    pub fn to_raw(&self) -> RawConfig {
        let (kind, epsilon) = match self.relay {
            RelayKind::Sharp => ("sharp", None),
            RelayKind::Mollified { epsilon } => ("mollified", Some(epsilon)),
            RelayKind::PropertyP => ("property_p", None),
        };
        let (forcing, value) = match self.toy.forcing {
            Forcing::Constant { value } => ("constant", Some(value)),
            Forcing::Linear => ("linear", None),
        };
        RawConfig {
            schema_version: Some(self.schema_version),
            alpha: Some(self.params.alpha),
            beta: Some(self.params.beta),
            u_star: Some(self.params.u_star),
            u_star_fraction: None,
            grid: RawGrid {
                dx: Some(self.grid.dx),
                dt: Some(self.grid.dt),
                x_max: Some(self.grid.x_max),
                t_max: Some(self.grid.t_max),
            },
            relay: RawRelay {
                kind: Some(kind.into()),
                epsilon,
            },
            run: RawRun {
                snapshot_stride: Some(self.options.snapshot_stride),
                store_x_max: self.options.store_x_max,
                scheme: Some(self.options.scheme),
            },
            output: RawOutput {
                dir: Some(self.out_dir.clone()),
            },
            probes: RawProbes {
                points: Some(self.probes.iter().map(|&(x, t)| [x, t]).collect()),
            },
            tolerances: RawTolerances {
                measure_tol: Some(self.tolerances.measure_tol),
                jump_factor: Some(self.tolerances.jump_factor),
                slope_floor: Some(self.tolerances.slope_floor),
                rate_floor: Some(self.tolerances.rate_floor),
                agreement_factor: Some(self.tolerances.agreement_factor),
            },
            toy: RawToy {
                forcing: Some(forcing.into()),
                value,
                horizon: Some(self.toy.horizon),
                dt: Some(self.toy.dt),
            },
            sweep: RawSweep {
                epsilons: Some(self.sweep.epsilons.clone()),
                grid_refinement: Some(self.sweep.grid_refinement),
            },
        }
    }

    /// Effective config as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serializes")
    }

    /// Output directory: `HHMO_OUT_DIR` overrides the configured one.
    pub fn resolved_out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.out_dir.clone(),
        }
    }

    pub fn sweep_base(&self) -> SweepBase {
        SweepBase {
            params: self.params,
            grid: self.grid,
            options: self.options,
            agreement_factor: self.tolerances.agreement_factor,
        }
    }

    pub fn perturbations(&self) -> Vec<Perturbation> {
        let mut out: Vec<Perturbation> = self
            .sweep
            .epsilons
            .iter()
            .map(|&epsilon| Perturbation::Relay {
                relay: RelayKind::Mollified { epsilon },
            })
            .collect();
        if self.sweep.grid_refinement {
            out.push(Perturbation::GridRefinement);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config("alpha = 1.0\nbeta = 1.0\nu_star_fraction = 0.8\n").unwrap();
        assert_eq!(
            c.params,
            ModelParams::with_threshold_fraction(1.0, 1.0, 0.8).unwrap()
        );
        assert_eq!(c.grid.dx, DEFAULT_DX);
        assert_eq!(c.grid.dt, DEFAULT_DT);
        assert_eq!(c.relay, RelayKind::Sharp);
        assert_eq!(c.options.snapshot_stride, 100);
        assert_eq!(c.probes.len(), 10);
        assert_eq!(c, RunConfig::default_config());
    }

    #[test]
    fn subcritical_fraction_rejected() {
        let err = parse_config("alpha = 1.0\nbeta = 1.0\nu_star_fraction = 1.2\n").unwrap_err();
        match err {
            Error::Validation(v) => assert!(v[0].contains("supercritical"), "{v:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn all_violations_listed() {
        let err = parse_config("alpha = -1.0\n[grid]\ndt = -1.0\n[run]\nsnapshot_stride = 0\n")
            .unwrap_err();
        match err {
            Error::Validation(v) => assert!(v.len() >= 3, "{v:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_key_reports_line_and_key() {
        let err = parse_config("alpha = 1.0\n\n[grid]\ndx = 0.01\nfoo = 3\n").unwrap_err();
        match err {
            Error::Parse { line, key, .. } => {
                assert_eq!(line, 5);
                assert_eq!(key.as_deref(), Some("foo"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn type_error_is_parse_error() {
        assert!(matches!(
            parse_config("alpha = \"one\"\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn round_trip() {
        let text = "alpha = 1.3\nbeta = 0.7\nu_star_fraction = 0.6\n[relay]\nkind = \"mollified\"\nepsilon = 5e-4\n[toy]\nforcing = \"linear\"\n[run]\nstore_x_max = 2.0\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_toml(), again.to_toml());
    }

    #[test]
    fn both_thresholds_rejected() {
        assert!(matches!(
            parse_config("u_star = 0.4\nu_star_fraction = 0.8\n"),
            Err(Error::Validation(_))
        ));
    }
}
