//! Pairwise comparison of runs: sup distance, the one-sided energy
//! `int (u1 - u2)_+^2 dx`, front ordering and entanglement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::front::FrontFunction;
use crate::model::{ModelConstants, ModelParams};
use crate::relay::RelayKind;
use crate::solver::{run_with, GridSpec, RunOptions, SolutionRecord};

/// Nodes per entanglement window.
pub const DEFAULT_WINDOW: usize = 16;
/// `agreement_tol = AGREEMENT_FACTOR * self-refinement error`.
pub const AGREEMENT_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Node where `l1 > l2`.
    pub x_ahead: f64,
    /// Node where `l1 < l2`.
    pub x_behind: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    pub sup_diff: Vec<f64>,
    /// `int (u1 - u2)_+^2 dx` (trapezoid).
    pub energy: Vec<f64>,
    /// `int (u2 - u1)_+^2 dx`.
    pub energy_reverse: Vec<f64>,
    pub x: Vec<f64>,
    /// Sign of `l1 - l2` per node; 0 when within `threshold` or neither ignited.
    pub front_order: Vec<i8>,
    pub threshold: f64,
    pub entangled: bool,
    pub witness: Option<Witness>,
    pub agreement_tol: f64,
    pub divergence_time: Option<f64>,
}

impl ComparisonReport {
    /// `max sup_diff` over snapshots with `t <= t_end`.
    pub fn max_sup_diff_until(&self, t_end: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.sup_diff)
            .filter(|(t, _)| **t <= t_end)
            .fold(0.0, |m, (_, d)| m.max(*d))
    }

    /// Time series as CSV with columns `t,sup_diff,energy,energy_reverse`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,sup_diff,energy,energy_reverse\n");
        for k in 0..self.times.len() {
            s += &format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.times[k], self.sup_diff[k], self.energy[k], self.energy_reverse[k]
            );
        }
        s
    }
}

fn trapezoid(dx: f64, f: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = f.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let inner: f64 = v[1..v.len() - 1].iter().sum();
    dx * (inner + 0.5 * (v[0] + v[v.len() - 1]))
}

/// Sign of `l1 - l2` per node, with never-ignited nodes treated as `+inf`.
pub fn front_order(ell1: &[Option<f64>], ell2: &[Option<f64>], threshold: f64) -> Vec<i8> {
    ell1.iter()
        .zip(ell2)
        .map(|(a, b)| match (a, b) {
            (None, None) => 0,
            (Some(_), None) => -1,
            (None, Some(_)) => 1,
            (Some(a), Some(b)) => {
                let d = a - b;
                if d > threshold {
                    1
                } else if d < -threshold {
                    -1
                } else {
                    0
                }
            }
        })
        .collect()
}

/// First window of `window` consecutive nodes containing both signs.
pub fn find_entanglement(x: &[f64], order: &[i8], window: usize) -> Option<Witness> {
    let window = window.max(2);
    let mut last_pos: Option<usize> = None;
    let mut last_neg: Option<usize> = None;
    for (i, &s) in order.iter().enumerate() {
        match s {
            1 => last_pos = Some(i),
            -1 => last_neg = Some(i),
            _ => continue,
        }
        if let (Some(p), Some(n)) = (last_pos, last_neg) {
            if p.abs_diff(n) < window {
                return Some(Witness {
                    x_ahead: x[p],
                    x_behind: x[n],
                });
            }
        }
    }
    None
}

/// Compares two runs on identical grids.
pub fn compare(
    rec1: &SolutionRecord,
    rec2: &SolutionRecord,
    agreement_tol: f64,
) -> Result<ComparisonReport> {
    compare_with(rec1, rec2, agreement_tol, DEFAULT_WINDOW)
}

pub fn compare_with(
    rec1: &SolutionRecord,
    rec2: &SolutionRecord,
    agreement_tol: f64,
    window: usize,
) -> Result<ComparisonReport> {
    let (g1, g2) = (&rec1.grid, &rec2.grid);
    if g1.dx != g2.dx || g1.dt != g2.dt {
        return Err(Error::GridMismatch(format!(
            "(dx, dt) = ({}, {}) vs ({}, {})",
            g1.dx, g1.dt, g2.dx, g2.dt
        )));
    }
    if rec1.x.len() != rec2.x.len() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} stored nodes",
            rec1.x.len(),
            rec2.x.len()
        )));
    }
    if rec1.times != rec2.times {
        return Err(Error::GridMismatch("snapshot times differ".into()));
    }
    let fields: Vec<(&[f64], &[f64])> = rec1
        .u
        .iter()
        .zip(&rec2.u)
        .map(|(a, b)| (a.as_slice(), b.as_slice()))
        .collect();
    Ok(assemble(
        &rec1.x,
        rec1.times.clone(),
        &fields,
        g1.dx,
        &rec1.ignition_time,
        &rec2.ignition_time,
        g1.dt,
        agreement_tol,
        window,
    ))
}

/// Compares a coarse run with a finer one by linear interpolation of the
/// fine fields onto the coarse nodes at the coarse snapshot times.
pub fn compare_interpolated(
    coarse: &SolutionRecord,
    fine: &SolutionRecord,
    agreement_tol: f64,
) -> Result<ComparisonReport> {
    if fine.grid.dx > coarse.grid.dx || fine.grid.dt > coarse.grid.dt {
        return Err(Error::GridMismatch(
            "second record must be the finer one".into(),
        ));
    }
    let tol = 0.5 * fine.grid.dt;
    let mut interp_u = Vec::with_capacity(coarse.n_snapshots());
    for &t in &coarse.times {
        let kf = fine.snapshot_index(t);
        if (fine.times[kf] - t).abs() > tol {
            return Err(Error::GridMismatch(format!("no fine snapshot at t = {t}")));
        }
        interp_u.push(
            coarse
                .x
                .iter()
                .map(|&x| interpolate(&fine.x, &fine.u[kf], x))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| {
                    Error::GridMismatch("fine record does not cover coarse nodes".into())
                })?,
        );
    }
    let ell_fine: Vec<Option<f64>> = coarse
        .x
        .iter()
        .map(|&x| fine.ignition_time[fine.node_index(x)])
        .collect();
    let fields: Vec<(&[f64], &[f64])> = coarse
        .u
        .iter()
        .zip(&interp_u)
        .map(|(a, b)| (a.as_slice(), b.as_slice()))
        .collect();
    Ok(assemble(
        &coarse.x,
        coarse.times.clone(),
        &fields,
        coarse.grid.dx,
        &coarse.ignition_time,
        &ell_fine,
        coarse.grid.dt,
        agreement_tol,
        DEFAULT_WINDOW,
    ))
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let last = *xs.last()?;
    if x < xs[0] - 1e-12 || x > last + 1e-12 {
        return None;
    }
    let j = xs.partition_point(|&s| s <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let s = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
    Some(ys[j - 1] + s * (ys[j] - ys[j - 1]))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    x: &[f64],
    times: Vec<f64>,
    fields: &[(&[f64], &[f64])],
    dx: f64,
    ell1: &[Option<f64>],
    ell2: &[Option<f64>],
    threshold: f64,
    agreement_tol: f64,
    window: usize,
) -> ComparisonReport {
    let mut sup_diff = Vec::with_capacity(fields.len());
    let mut energy = Vec::with_capacity(fields.len());
    let mut energy_reverse = Vec::with_capacity(fields.len());
    for (a, b) in fields {
        sup_diff.push(
            a.iter()
                .zip(*b)
                .fold(0.0f64, |m, (p, q)| m.max((p - q).abs())),
        );
        energy.push(trapezoid(
            dx,
            a.iter().zip(*b).map(|(p, q)| (p - q).max(0.0).powi(2)),
        ));
        energy_reverse.push(trapezoid(
            dx,
            a.iter().zip(*b).map(|(p, q)| (q - p).max(0.0).powi(2)),
        ));
    }
    let order = front_order(ell1, ell2, threshold);
    let witness = find_entanglement(x, &order, window);
    let divergence_time = times
        .iter()
        .zip(&sup_diff)
        .find(|(_, d)| **d > agreement_tol)
        .map(|(t, _)| *t);
    ComparisonReport {
        times,
        sup_diff,
        energy,
        energy_reverse,
        x: x.to_vec(),
        front_order: order,
        threshold,
        entangled: witness.is_some(),
        witness,
        agreement_tol,
        divergence_time,
    }
}

/// Front of a record without the residual bookkeeping.
pub fn front_of(record: &SolutionRecord) -> FrontFunction {
    FrontFunction::from_parts(record.x.clone(), record.ignition_time.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyViolation {
    pub index: usize,
    pub t: f64,
    pub previous: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub monotone: bool,
    /// Snapshots inside the window.
    pub checked: usize,
    pub first_violation: Option<EnergyViolation>,
}

/// Checks `energy` is non-increasing on snapshots with `t` in `window`, with
/// per-step slack `1e-10 + 1e-6 E`.
pub fn energy_monotonicity_check(
    report: &ComparisonReport,
    window: (f64, f64),
) -> Result<MonotonicityVerdict> {
    energy_trace_check(&report.times, &report.energy, window)
}

pub fn energy_trace_check(
    times: &[f64],
    energy: &[f64],
    window: (f64, f64),
) -> Result<MonotonicityVerdict> {
    let idx: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= window.0 && times[k] <= window.1)
        .collect();
    if idx.len() < 3 {
        return Err(Error::InsufficientSnapshots { t: window.1 });
    }
    let first_violation = idx.windows(2).find_map(|w| {
        let (prev, cur) = (energy[w[0]], energy[w[1]]);
        (cur > prev + 1e-10 + 1e-6 * prev).then_some(EnergyViolation {
            index: w[1],
            t: times[w[1]],
            previous: prev,
            energy: cur,
        })
    });
    Ok(MonotonicityVerdict {
        monotone: first_violation.is_none(),
        checked: idx.len(),
        first_violation,
    })
}

/// What a sweep row changes relative to the sharp base run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Relay {
        relay: RelayKind,
    },
    /// `(dx, dt) -> (dx/2, dt/4)`, compared by interpolation.
    GridRefinement,
}

impl Perturbation {
    pub fn label(&self) -> String {
        match self {
            Perturbation::Relay { relay } => relay.label(),
            Perturbation::GridRefinement => "grid(dx/2, dt/4)".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepBase {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub options: RunOptions,
    pub agreement_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub perturbation: Perturbation,
    pub divergence_time: Option<f64>,
    /// `divergence_time` is absent or at least `T_unique`.
    pub agrees_until_t_unique: bool,
    pub max_sup_diff: f64,
    pub energy_monotone: Option<bool>,
    pub max_energy_reverse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub t_unique: f64,
    pub self_refinement_error: f64,
    pub agreement_tol: f64,
    pub rows: Vec<SweepRow>,
}

/// Sharp run on `(dx/2, dt/4)` with the snapshot stride scaled to keep the
/// same snapshot times.
pub fn refined(base: &SweepBase) -> Result<(GridSpec, RunOptions)> {
    let g = &base.grid;
    let grid = GridSpec::new(g.dx / 2.0, g.dt / 4.0, g.x_max, g.t_max)?;
    let options = RunOptions {
        snapshot_stride: base.options.snapshot_stride * 4,
        ..base.options
    };
    Ok((grid, options))
}

/// `max_i |u_coarse - u_fine|` at the last snapshot with `t <= t_end`.
pub fn refinement_error_at(
    coarse: &SolutionRecord,
    fine: &SolutionRecord,
    t_end: f64,
) -> Result<f64> {
    let k = coarse
        .times
        .partition_point(|&t| t <= t_end + 1e-12)
        .saturating_sub(1);
    let t = coarse.times[k];
    let kf = fine.snapshot_index(t);
    if (fine.times[kf] - t).abs() > 0.5 * fine.grid.dt {
        return Err(Error::GridMismatch(format!("no fine snapshot at t = {t}")));
    }
    let mut err = 0.0f64;
    for (i, &x) in coarse.x.iter().enumerate() {
        let v = interpolate(&fine.x, &fine.u[kf], x)
            .ok_or_else(|| Error::GridMismatch("fine record does not cover coarse nodes".into()))?;
        err = err.max((coarse.u[k][i] - v).abs());
    }
    Ok(err)
}

/// Runs the sharp base, its refinement, and one partner per perturbation
/// concurrently, then compares each partner with the base on `[0, T_unique]`.
pub fn perturbation_sweep(base: &SweepBase, perturbations: &[Perturbation]) -> Result<SweepTable> {
    let constants = ModelConstants::compute(&base.params, None)?;
    if perturbations.is_empty() {
        return Ok(SweepTable {
            t_unique: constants.t_unique,
            self_refinement_error: 0.0,
            agreement_tol: 0.0,
            rows: Vec::new(),
        });
    }
    let (fine_grid, fine_opts) = refined(base)?;
    let relays: Vec<RelayKind> = perturbations
        .iter()
        .filter_map(|p| match p {
            Perturbation::Relay { relay } => Some(*relay),
            Perturbation::GridRefinement => None,
        })
        .collect();

    let (sharp, fine, partners) = std::thread::scope(|s| {
        let sharp = s.spawn(|| run_with(&base.params, &base.grid, RelayKind::Sharp, &base.options));
        let fine = s.spawn(|| run_with(&base.params, &fine_grid, RelayKind::Sharp, &fine_opts));
        let partners: Vec<_> = relays
            .iter()
            .map(|&r| s.spawn(move || run_with(&base.params, &base.grid, r, &base.options)))
            .collect();
        let join = |h: std::thread::ScopedJoinHandle<'_, Result<SolutionRecord>>| {
            h.join().expect("worker run panicked")
        };
        (
            join(sharp),
            join(fine),
            partners.into_iter().map(join).collect::<Vec<_>>(),
        )
    });
    let sharp = sharp?;
    let fine = fine?;
    // The measured T1 may be below the ceiling; use the run's own constants.
    let t_unique = sharp.constants.map_or(constants.t_unique, |c| c.t_unique);
    let self_err = refinement_error_at(&sharp, &fine, t_unique)?;
    let agreement_tol = base.agreement_factor * self_err;

    let mut partners = partners.into_iter();
    let mut rows = Vec::with_capacity(perturbations.len());
    for &p in perturbations {
        let report = match p {
            Perturbation::Relay { .. } => {
                let other = partners.next().expect("one run per relay perturbation")?;
                compare(&sharp, &other, agreement_tol)?
            }
            Perturbation::GridRefinement => compare_interpolated(&sharp, &fine, agreement_tol)?,
        };
        let energy_monotone = energy_monotonicity_check(&report, (0.0, t_unique))
            .ok()
            .map(|v| v.monotone);
        let max_energy_reverse = report
            .times
            .iter()
            .zip(&report.energy_reverse)
            .filter(|(t, _)| **t <= t_unique)
            .fold(0.0f64, |m, (_, e)| m.max(*e));
        rows.push(SweepRow {
            label: p.label(),
            perturbation: p,
            divergence_time: report.divergence_time,
            agrees_until_t_unique: report.divergence_time.is_none_or(|t| t >= t_unique),
            max_sup_diff: report.max_sup_diff_until(t_unique),
            energy_monotone,
            max_energy_reverse,
        });
    }
    Ok(SweepTable {
        t_unique,
        self_refinement_error: self_err,
        agreement_tol,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_run(kind: RelayKind) -> SolutionRecord {
        let p = ModelParams::with_threshold_fraction(1.0, 1.0, 0.8).unwrap();
        let g = GridSpec::new(0.02, 1e-4, 3.0, 0.05).unwrap();
        run_with(
            &p,
            &g,
            kind,
            &RunOptions {
                snapshot_stride: 25,
                ..RunOptions::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn identical_runs_agree() {
        let a = small_run(RelayKind::Sharp);
        let r = compare(&a, &a, 1e-6).unwrap();
        assert!(r.sup_diff.iter().all(|&d| d == 0.0));
        assert!(r.energy.iter().all(|&e| e == 0.0));
        assert!(!r.entangled);
        assert!(r.divergence_time.is_none());
        assert!(energy_monotonicity_check(&r, (0.0, 1.0)).unwrap().monotone);
    }

    #[test]
    fn grid_mismatch() {
        let a = small_run(RelayKind::Sharp);
        let mut b = a.clone();
        b.grid.dx *= 2.0;
        assert!(matches!(compare(&a, &b, 1.0), Err(Error::GridMismatch(_))));
        let mut c = a.clone();
        c.x.pop();
        assert!(matches!(compare(&a, &c, 1.0), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn symmetric_report() {
        let a = small_run(RelayKind::Sharp);
        let b = small_run(RelayKind::Mollified { epsilon: 1e-4 });
        let ab = compare(&a, &b, 1e-6).unwrap();
        let ba = compare(&b, &a, 1e-6).unwrap();
        assert_eq!(ab.sup_diff, ba.sup_diff);
        assert_eq!(ab.energy, ba.energy_reverse);
        assert_eq!(ab.energy_reverse, ba.energy);
        assert_eq!(ab.entangled, ba.entangled);
        assert!(ab
            .front_order
            .iter()
            .zip(&ba.front_order)
            .all(|(p, q)| *p == -*q));
    }

    #[test]
    fn crossing_fronts_are_entangled() {
        let dt = 1e-4;
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.01).collect();
        let ell1: Vec<Option<f64>> = x.iter().map(|&y| Some(y * y + 0.01)).collect();
        let ell2: Vec<Option<f64>> = x
            .iter()
            .map(|&y| Some(y * y + 0.01 + 10.0 * dt * (y - 0.2) / 0.01))
            .collect();
        let order = front_order(&ell1, &ell2, dt);
        let w = find_entanglement(&x, &order, DEFAULT_WINDOW).unwrap();
        assert!((w.x_ahead - 0.19).abs() < 1e-12, "{w:?}");
        assert!((w.x_behind - 0.21).abs() < 1e-12, "{w:?}");
    }

    #[test]
    fn violation_at_right_snapshot() {
        let t = [0.0, 0.1, 0.2, 0.3, 0.4];
        let e = [1.0, 0.5, 0.5, 0.7, 0.1];
        let v = energy_trace_check(&t, &e, (0.0, 1.0)).unwrap();
        assert!(!v.monotone);
        assert_eq!(v.first_violation.unwrap().index, 3);
        assert!(energy_trace_check(&t, &e, (0.0, 0.15)).is_err());
    }

    #[test]
    fn empty_sweep() {
        let p = ModelParams::with_threshold_fraction(1.0, 1.0, 0.8).unwrap();
        let base = SweepBase {
            params: p,
            grid: GridSpec::new(0.02, 1e-4, 3.0, 0.05).unwrap(),
            options: RunOptions::default(),
            agreement_factor: AGREEMENT_FACTOR,
        };
        assert!(perturbation_sweep(&base, &[]).unwrap().rows.is_empty());
    }

    #[test]
    fn csv_header() {
        let a = small_run(RelayKind::Sharp);
        let csv = compare(&a, &a, 1.0).unwrap().to_csv();
        assert!(csv.starts_with("t,sup_diff,energy,energy_reverse\n"));
        assert_eq!(csv.lines().count(), a.n_snapshots() + 1);
    }

    proptest! {
        #[test]
        fn single_sign_order_never_entangled(d in proptest::collection::vec(0.0f64..1.0, 2..60), sign in any::<bool>()) {
            let x: Vec<f64> = (0..d.len()).map(|i| i as f64).collect();
            let s = if sign { 1.0 } else { -1.0 };
            let ell1: Vec<Option<f64>> = d.iter().map(|&v| Some(1.0 + s * v)).collect();
            let ell2 = vec![Some(1.0); d.len()];
            let order = front_order(&ell1, &ell2, 1e-3);
            prop_assert!(find_entanglement(&x, &order, 8).is_none());
        }
    }
}
