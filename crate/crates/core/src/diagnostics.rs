//! Duhamel integrals, the time-derivative identity
//! `(u - psi)_t = -F1 - u* F2`, and the transversality conditions at the front.
//!
//! ```text
//! F1(x, t) = int_0^t int Phi(x - y, t - s) p(y, s) u_t(y, s) dy ds
//! F2(x, t) = int_I Phi(x - y, t - l(y)) dy
//! ```
//!
//! Both are taken over the even extension to the whole line, so every
//! half-line node `y` contributes through `x - y` and `x + y`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::front::FrontFunction;
use crate::model::{self, heat_kernel, heat_kernel_time_integral};
use crate::relay::RelayKind;
use crate::solver::{IgnitionStencil, SolutionRecord};

pub const DEFAULT_SLOPE_FLOOR: f64 = 1e-4;
pub const DEFAULT_RATE_FLOOR: f64 = 1e-4;
const GAUSS_POINTS: usize = 8;
const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
fn gauss_legendre() -> &'static [(f64, f64); GAUSS_POINTS] {
    static RULE: OnceLock<[(f64, f64); GAUSS_POINTS]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_POINTS;
        let mut out = [(0.0, 0.0); GAUSS_POINTS];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            *slot = (z, 2.0 / ((1.0 - z * z) * dp * dp));
        }
        out
    })
}

/// `int_a^b f` by Gauss–Legendre on `panels` equal panels.
fn gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        for &(z, wt) in gauss_legendre() {
            sum += wt * f(mid + 0.5 * h * z);
        }
    }
    0.5 * h * sum
}

fn snapshot_at(record: &SolutionRecord, t: f64) -> Result<usize> {
    let k = record.snapshot_index(t);
    let tol = 1e-9 * (1.0 + t.abs());
    if record.times.is_empty() || (record.times[k] - t).abs() > tol || k == 0 {
        return Err(Error::InsufficientSnapshots { t });
    }
    Ok(k)
}

/// `F1(x, t)` with `t` a snapshot time.
pub fn eval_f1(record: &SolutionRecord, x: f64, t: f64) -> Result<f64> {
    eval_f1_every(record, x, t, 1)
}

/// `F1` using only every `every`-th snapshot (counted back from `t`).
///
/// On each snapshot interval `u_t` is the difference quotient and `p` the
/// fraction of the interval after ignition (interval average of `p` for the
/// mollified relay); the kernel is integrated exactly in time, which also
/// covers the singular final interval.
pub fn eval_f1_every(record: &SolutionRecord, x: f64, t: f64, every: usize) -> Result<f64> {
    if t < 10.0 * record.grid.dt {
        return Err(Error::InsufficientSnapshots { t });
    }
    let kt = snapshot_at(record, t)?;
    let every = every.max(1);
    let mut idx: Vec<usize> = (0..=kt).rev().step_by(every).collect();
    if *idx.last().unwrap() != 0 {
        idx.push(0);
    }
    idx.reverse();

    let dx = record.grid.dx;
    let mollified = matches!(record.relay, RelayKind::Mollified { .. });
    let u_star = record.params.u_star;
    let kernel = |y: f64, h_hi: f64, h_lo: f64| {
        heat_kernel_time_integral(x - y, h_hi) - heat_kernel_time_integral(x - y, h_lo)
            + heat_kernel_time_integral(x + y, h_hi)
            - heat_kernel_time_integral(x + y, h_lo)
    };
    let mut total = 0.0;
    for (j, &y) in record.x.iter().enumerate() {
        let weight = if j == 0 { 0.5 * dx } else { dx };
        // p can only be positive after the accumulator has started
        let Some(ign) = record.ignition_time[j] else {
            continue;
        };
        if ign > t {
            continue;
        }
        for win in idx.windows(2) {
            let (k0, k1) = (win[0], win[1]);
            let (s0, s1) = (record.times[k0], record.times[k1]);
            if s1 <= ign && !mollified {
                continue;
            }
            let u0 = record.u[k0][j];
            let u1 = record.u[k1][j];
            let contribution = if mollified {
                let pbar = 0.5 * (record.p[k0][j] + record.p[k1][j]);
                if pbar == 0.0 {
                    continue;
                }
                pbar * (u1 - u0) / (s1 - s0) * kernel(y, t - s0, t - s1)
            } else if ign <= s0 {
                let pv = record.p[k1][j];
                pv * (u1 - u0) / (s1 - s0) * kernel(y, t - s0, t - s1)
            } else {
                // ignition inside the interval: integrate from the threshold
                // crossing on, where u = u*
                let (start, u_start) = match record.stencils[j].as_ref() {
                    Some(st) => (crossing_time(st, u_star).max(s0), u_star),
                    None => (ign, u0),
                };
                let span = s1 - start;
                if span <= 0.0 {
                    continue;
                }
                (u1 - u_start) / span * kernel(y, t - start, t - s1)
            };
            total += weight * contribution;
        }
    }
    Ok(total)
}

/// Time at which `u` reached `u*` during the ignition step, by linear
/// interpolation between the step's end points. The recorded ignition time is
/// the end of that step, so `u` there overshoots `u*` by up to `u_t dt`.
pub fn crossing_time(stencil: &IgnitionStencil, u_star: f64) -> f64 {
    let (u_now, u_prev, h) = (stencil.u_time[0], stencil.u_time[1], stencil.lags[1]);
    if h <= 0.0 || u_now <= u_prev {
        return stencil.t;
    }
    let frac = ((u_now - u_star) / (u_now - u_prev)).clamp(0.0, 1.0);
    stencil.t - frac * h
}

/// `F2(x, t)` over the front's domain, with `l` interpolated linearly between
/// adjacent front nodes. The domain is the union of grid cells whose two end
/// nodes both precipitate. Returns `+inf` when the front crosses level `t`
/// with slope below `slope_floor`.
pub fn eval_f2(front: &FrontFunction, x: f64, t: f64, slope_floor: f64) -> f64 {
    let mut total = 0.0;
    let pair = |y: f64, tau: f64| heat_kernel(x - y, tau) + heat_kernel(x + y, tau);
    for (a, b) in front.ranges() {
        for j in a..b {
            let (ya, yb) = (front.x[j], front.x[j + 1]);
            let (ta, tb) = (t - front.ell[j].unwrap(), t - front.ell[j + 1].unwrap());
            if ta <= 0.0 && tb <= 0.0 {
                continue;
            }
            let s = (tb - ta) / (yb - ya);
            if ta > 0.0 && tb > 0.0 {
                let (tmin, tmax) = (ta.min(tb), ta.max(tb));
                if tmax - tmin > tmin {
                    total += sigma_integral(x, ya, ta, s, tmin.sqrt(), tmax.sqrt());
                } else {
                    let tau = |y: f64| ta + s * (y - ya);
                    let panels = ((yb - ya) / (0.5 * tmin.sqrt())).ceil().clamp(1.0, 64.0) as usize;
                    total += gauss(|y| pair(y, tau(y)), ya, yb, panels);
                }
                continue;
            }
            // the front crosses level t inside this cell
            let slope = crossing_slope(front, j, ta > 0.0);
            if slope.abs() < slope_floor {
                return f64::INFINITY;
            }
            let sigma_max = ta.max(tb).sqrt();
            total += sigma_integral(x, ya, ta, s, 0.0, sigma_max);
        }
    }
    total
}

/// `int Phi(x-y, tau) + Phi(x+y, tau) dy` over a cell where
/// `tau = ta + s (y - ya)`, after the substitution `tau = sigma^2`.
fn sigma_integral(x: f64, ya: f64, ta: f64, s: f64, s_lo: f64, s_hi: f64) -> f64 {
    let scale = 1.0 / (SQRT_PI * s.abs());
    let f = |sigma: f64| {
        let y = ya + (sigma * sigma - ta) / s;
        let q = 4.0 * sigma * sigma;
        if q == 0.0 {
            return 0.0;
        }
        (-(x - y) * (x - y) / q).exp() + (-(x + y) * (x + y) / q).exp()
    };
    scale * gauss(f, s_lo, s_hi, 2)
}

/// `l'` at the crossing in cell `(j, j+1)` from a quadratic through the cell's
/// node on the not-yet-precipitated side and two nodes on the other side.
fn crossing_slope(front: &FrontFunction, j: usize, left_is_past: bool) -> f64 {
    let l = |i: usize| front.ell.get(i).copied().flatten();
    let nodes: Option<[usize; 3]> = if left_is_past {
        j.checked_sub(1)
            .filter(|&k| l(k).is_some())
            .map(|k| [j + 1, j, k])
    } else {
        l(j + 2).map(|_| [j, j + 1, j + 2])
    };
    let linear = (l(j + 1).unwrap() - l(j).unwrap()) / front.dx;
    let Some([i0, i1, i2]) = nodes else {
        return linear;
    };
    // derivative at x_{i0} of the quadratic through (i0, i1, i2), equally spaced
    let h = front.x[i1] - front.x[i0];
    (-3.0 * l(i0).unwrap() + 4.0 * l(i1).unwrap() - l(i2).unwrap()) / (2.0 * h)
}

/// One row of the identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub x: f64,
    pub t: f64,
    pub f1: f64,
    pub f2: f64,
    pub psi_t: f64,
    pub u_t: f64,
    pub w_t: f64,
    /// `u_t - psi_t + F1 + u* F2`
    pub residual: f64,
}

/// Evaluates `u_t - psi_t + F1 + u* F2` at snapshot-time probes. Time
/// derivatives are centered differences of neighbouring snapshots.
pub fn check_ut_identity(
    record: &SolutionRecord,
    front: &FrontFunction,
    probes: &[(f64, f64)],
) -> Result<Vec<ProbeRow>> {
    let g = &record.grid;
    let mut rows = Vec::with_capacity(probes.len());
    for &(x, t) in probes {
        let i = record.node_index(x);
        let x = record.x[i];
        if let Some(l) = front.ell.get(i).copied().flatten() {
            if (t - l).abs() < 2.0 * g.dt {
                return Err(Error::ProbeOnFront { x, t });
            }
        }
        let k = snapshot_at(record, t)?;
        if k + 1 >= record.n_snapshots() {
            return Err(Error::InsufficientSnapshots { t });
        }
        let t = record.times[k];
        let span = record.times[k + 1] - record.times[k - 1];
        let w_t = (record.w[k + 1][i] - record.w[k - 1][i]) / span;
        let u_t = (record.u[k + 1][i] - record.u[k - 1][i]) / span;
        let f1 = eval_f1(record, x, t)?;
        let f2 = eval_f2(front, x, t, 0.0);
        rows.push(ProbeRow {
            x,
            t,
            f1,
            f2,
            psi_t: model::psi_t(x, t, &record.params),
            u_t,
            w_t,
            residual: w_t + f1 + record.params.u_star * f2,
        });
    }
    Ok(rows)
}

/// Local history at a front node: the one captured during the run, or one
/// assembled from consecutive snapshots.
pub fn ignition_stencil(
    record: &SolutionRecord,
    front: &FrontFunction,
    i: usize,
) -> Option<IgnitionStencil> {
    if let Some(s) = record.stencils.get(i).and_then(Option::as_ref) {
        return Some(s.clone());
    }
    let l = front.ell.get(i).copied().flatten()?;
    let k = record.snapshot_index(l);
    let t = record.times[k];
    let mut lags = [0.0; 5];
    let mut u_time = [0.0; 5];
    for (m, lag) in [0usize, 1, 2, 4, 8].into_iter().enumerate() {
        let kk = k.saturating_sub(lag);
        lags[m] = t - record.times[kk];
        u_time[m] = record.u[kk][i];
    }
    let mut u_space = [f64::NAN; 5];
    for (j, slot) in u_space.iter_mut().enumerate() {
        if let Some(&v) = record.u[k].get(i + j) {
            *slot = v;
        }
    }
    Some(IgnitionStencil {
        t,
        lags,
        u_time,
        u_space,
    })
}

/// Mean forward difference of `u` in `x` over 2, 3 and 4 cells at
/// `(x_i, l(x_i))`; the flag is `value < -slope_floor`.
pub fn transversality_spatial(
    record: &SolutionRecord,
    front: &FrontFunction,
    i: usize,
    slope_floor: f64,
) -> Option<(bool, f64)> {
    let s = ignition_stencil(record, front, i)?;
    let dx = record.grid.dx;
    let diffs: Vec<f64> = (2..=4)
        .filter(|&k| s.u_space[k].is_finite())
        .map(|k| (s.u_space[k] - s.u_space[0]) / (k as f64 * dx))
        .collect();
    if diffs.is_empty() {
        return None;
    }
    let value = diffs.iter().sum::<f64>() / diffs.len() as f64;
    Some((value < -slope_floor, value))
}

/// Largest backward difference `(u(x, l) - u(x, l - k)) / k` over the
/// ladder `k = dt, 2dt, 4dt, 8dt`; the flag is `value > rate_floor`.
/// The ladder maximum stands in for the limsup as `k -> 0`.
pub fn transversality_temporal(
    record: &SolutionRecord,
    front: &FrontFunction,
    i: usize,
    rate_floor: f64,
) -> Option<(bool, f64)> {
    let s = ignition_stencil(record, front, i)?;
    let value = (1..5)
        .filter(|&m| s.lags[m] > 0.0)
        .map(|m| (s.u_time[0] - s.u_time[m]) / s.lags[m])
        .fold(f64::NEG_INFINITY, f64::max);
    if !value.is_finite() {
        return None;
    }
    Some((value > rate_floor, value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontDerivative {
    pub x: f64,
    /// `-u_x+ / u_t-`
    pub estimate: f64,
    /// Difference quotient of the extracted front.
    pub discrete: f64,
    pub relative_gap: f64,
}

/// `l'(x) = -u_x+ / u_t-` with second-order one-sided differences, compared
/// with the slope of the extracted front.
pub fn front_derivative_estimate(
    front: &FrontFunction,
    record: &SolutionRecord,
    i: usize,
    rate_floor: f64,
) -> Result<FrontDerivative> {
    let x = front.x[i];
    let temporal = transversality_temporal(record, front, i, rate_floor);
    if !temporal.is_some_and(|(flag, _)| flag) {
        return Err(Error::DegenerateRate { x });
    }
    let s = ignition_stencil(record, front, i).ok_or(Error::DegenerateRate { x })?;
    let dx = record.grid.dx;
    let u_x = (-3.0 * s.u_space[0] + 4.0 * s.u_space[1] - s.u_space[2]) / (2.0 * dx);
    let h = s.lags[1];
    let u_t = if s.lags[2] > 0.0 && (s.lags[2] - 2.0 * h).abs() <= 1e-9 * h {
        (3.0 * s.u_time[0] - 4.0 * s.u_time[1] + s.u_time[2]) / (2.0 * h)
    } else {
        (s.u_time[0] - s.u_time[1]) / h
    };
    let estimate = -u_x / u_t;
    let l = |k: usize| front.ell.get(k).copied().flatten();
    let discrete = match (i.checked_sub(1).and_then(l), l(i), l(i + 1)) {
        (Some(a), _, Some(b)) => (b - a) / (2.0 * dx),
        (None, Some(c), Some(b)) => (b - c) / dx,
        (Some(a), Some(c), None) => (c - a) / dx,
        _ => f64::NAN,
    };
    Ok(FrontDerivative {
        x,
        estimate,
        discrete,
        relative_gap: (estimate - discrete).abs() / discrete.abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransversalityRow {
    pub x: f64,
    pub ell: f64,
    pub spatial_value: Option<f64>,
    pub spatial_flag: bool,
    pub temporal_value: Option<f64>,
    pub temporal_flag: bool,
}

/// Both transversality values at every front node with `l <= t_limit`.
pub fn transversality_table(
    record: &SolutionRecord,
    front: &FrontFunction,
    t_limit: f64,
    slope_floor: f64,
    rate_floor: f64,
) -> Vec<TransversalityRow> {
    front
        .domain()
        .into_iter()
        .filter(|&i| front.ell[i].unwrap() <= t_limit)
        .map(|i| {
            let sp = transversality_spatial(record, front, i, slope_floor);
            let tm = transversality_temporal(record, front, i, rate_floor);
            TransversalityRow {
                x: front.x[i],
                ell: front.ell[i].unwrap(),
                spatial_value: sp.map(|v| v.1),
                spatial_flag: sp.is_some_and(|v| v.0),
                temporal_value: tm.map(|v| v.1),
                temporal_flag: tm.is_some_and(|v| v.0),
            }
        })
        .collect()
}

/// Margins of the analytic bounds on `F1`, `F2` and `psi_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundMargins {
    pub f1_bound: f64,
    pub f1_max: f64,
    pub f2_bound: f64,
    /// Largest `F2` among probes with `t <= T2`.
    pub f2_max: f64,
    /// `min (psi_t - c_psi / t)` over grid points of `ES(T2)`.
    pub psi_t_margin: f64,
}

/// Smallest `psi_t(y, s) - c_psi / s` over the record's nodes and snapshots
/// inside `ES(T2)`.
pub fn psi_t_lower_margin(record: &SolutionRecord) -> Option<f64> {
    let c = record.constants?;
    let alpha = record.params.alpha;
    let mut margin = f64::INFINITY;
    for &s in record.times.iter().filter(|&&s| s > 0.0 && s <= c.t2) {
        let (lo, hi) = (alpha * s.sqrt(), c.alpha_star * s.sqrt());
        for &y in record.x.iter().filter(|&&y| y > lo && y < hi) {
            margin = margin.min(model::psi_t(y, s, &record.params) - c.c_psi_lower / s);
        }
    }
    Some(margin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub probes: Vec<ProbeRow>,
    pub max_abs_residual: f64,
    pub front: Vec<TransversalityRow>,
    pub derivatives: Vec<FrontDerivative>,
    pub bounds: Option<BoundMargins>,
    pub slope_floor: f64,
    pub rate_floor: f64,
    pub notes: Vec<String>,
}

/// Identity residuals at `probes`, transversality up to `T_unique`, and the
/// bound margins.
pub fn diagnose(
    record: &SolutionRecord,
    front: &FrontFunction,
    probes: &[(f64, f64)],
    slope_floor: f64,
    rate_floor: f64,
) -> Result<DiagnosticsReport> {
    let rows = check_ut_identity(record, front, probes)?;
    let t_limit = record.constants.map_or(f64::INFINITY, |c| c.t_unique);
    let table = transversality_table(record, front, t_limit, slope_floor, rate_floor);
    let derivatives = front
        .domain()
        .into_iter()
        .filter(|&i| front.ell[i].unwrap() <= t_limit)
        .filter_map(|i| front_derivative_estimate(front, record, i, rate_floor).ok())
        .collect();
    let bounds = record.constants.map(|c| BoundMargins {
        f1_bound: c.f1_bound(),
        f1_max: rows.iter().map(|r| r.f1).fold(f64::NEG_INFINITY, f64::max),
        f2_bound: c.f2_bound(),
        f2_max: rows
            .iter()
            .filter(|r| r.t <= c.t2)
            .map(|r| r.f2)
            .fold(f64::NEG_INFINITY, f64::max),
        psi_t_margin: psi_t_lower_margin(record).unwrap_or(f64::INFINITY),
    });
    Ok(DiagnosticsReport {
        max_abs_residual: rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max),
        probes: rows,
        front: table,
        derivatives,
        bounds,
        slope_floor,
        rate_floor,
        notes: vec![
            "temporal transversality uses the maximum backward difference over lags dt, 2dt, 4dt, 8dt in place of the limsup".into(),
        ],
    })
}
