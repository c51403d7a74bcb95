//! Precipitation front `l(x)`, ring/interring segmentation and boundary
//! classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConstants, ModelParams};
use crate::solver::{GridSpec, SolutionRecord};

/// Ignition time per node. `ell[i] = None` marks nodes that never precipitated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontFunction {
    pub x: Vec<f64>,
    pub ell: Vec<Option<f64>>,
    pub dx: f64,
    /// `max |u(x, l(x)) - u*|` over front nodes (0 for synthetic fronts).
    pub max_residual: f64,
    /// Node with the largest residual.
    pub max_residual_node: Option<usize>,
}

impl FrontFunction {
    /// Front from explicit node positions and ignition times.
    pub fn from_parts(x: Vec<f64>, ell: Vec<Option<f64>>) -> Self {
        let dx = if x.len() > 1 { x[1] - x[0] } else { 1.0 };
        Self {
            x,
            ell,
            dx,
            max_residual: 0.0,
            max_residual_node: None,
        }
    }

    /// Indices of precipitated nodes.
    pub fn domain(&self) -> Vec<usize> {
        self.ell
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|_| i))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.ell.iter().all(Option::is_none)
    }

    /// Contiguous index ranges `[a, b]` of precipitated nodes.
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, l) in self.ell.iter().enumerate() {
            match (l.is_some(), start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((s, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.ell.len() - 1));
        }
        out
    }

    /// Keeps only the given nodes in the domain.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for (i, l) in out.ell.iter_mut().enumerate() {
            if !keep(i) {
                *l = None;
            }
        }
        out
    }

    /// Position where the front crosses level `t` inside the run containing
    /// the latest precipitated node with `l <= t`, if that node has an
    /// unprecipitated or later neighbour.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        let j = (0..self.ell.len())
            .rev()
            .find(|&i| self.ell[i].is_some_and(|l| l <= t))?;
        match self.ell.get(j + 1).copied().flatten() {
            Some(next) if next > t => {
                let l = self.ell[j].unwrap();
                Some(self.x[j] + self.dx * (t - l) / (next - l))
            }
            _ => Some(self.x[j]),
        }
    }
}

/// Extracts the front from a record and measures `|u(x, l(x)) - u*|` at the
/// recorded ignition step.
pub fn extract_front(record: &SolutionRecord) -> Result<FrontFunction> {
    if record.ignition_time.iter().all(Option::is_none) {
        return Err(Error::EmptyFront);
    }
    let mut front = FrontFunction::from_parts(record.x.clone(), record.ignition_time.clone());
    front.dx = record.grid.dx;
    let u_star = record.params.u_star;
    for (i, l) in record.ignition_time.iter().enumerate() {
        let Some(l) = *l else { continue };
        let u_at = match record.stencils.get(i).and_then(Option::as_ref) {
            Some(s) => s.u_time[0],
            None => record.u[record.snapshot_index(l)][i],
        };
        let r = (u_at - u_star).abs();
        if r > front.max_residual || front.max_residual_node.is_none() {
            front.max_residual = r;
            front.max_residual_node = Some(i);
        }
    }
    Ok(front)
}

/// Half-open interval `[start, end)`; `end = None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: Option<f64>,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.end.map_or(f64::INFINITY, |e| e - self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSegmentation {
    pub rings: Vec<Interval>,
    pub interrings: Vec<Interval>,
    /// End of the alternating ring/interring structure.
    pub x_star: f64,
    /// Largest analyzed position (the source parabola at the final time).
    pub analyzed_until: f64,
}

/// `p*(x)`: the final precipitation value at nodes the source has already
/// passed.
pub fn p_star(record: &SolutionRecord) -> Vec<f64> {
    let t_end = record.times.last().copied().unwrap_or(0.0);
    let reach = record.params.alpha * t_end.sqrt();
    record
        .final_p()
        .iter()
        .zip(&record.x)
        .take_while(|(_, &x)| x < reach)
        .map(|(&p, _)| p)
        .collect()
}

/// Segments a record. Runs shorter than `measure_tol` times the analyzed
/// range are absorbed into their neighbours.
pub fn segment_rings(record: &SolutionRecord, measure_tol: f64) -> RingSegmentation {
    let p = p_star(record);
    segment_pattern(&record.x[..p.len()], &p, measure_tol)
}

/// Segmentation of an explicit `p*` pattern on nodes `x`. Values above 1/2
/// count as precipitated.
pub fn segment_pattern(x: &[f64], p_star: &[f64], measure_tol: f64) -> RingSegmentation {
    let n = p_star.len().min(x.len());
    if n == 0 {
        return RingSegmentation {
            rings: Vec::new(),
            interrings: Vec::new(),
            x_star: 0.0,
            analyzed_until: 0.0,
        };
    }
    let analyzed_until = x[n - 1];
    // (value, first node, last node)
    let mut runs: Vec<(bool, usize, usize)> = Vec::new();
    for i in 0..n {
        let v = p_star[i] > 0.5;
        match runs.last_mut() {
            Some(r) if r.0 == v => r.2 = i,
            _ => runs.push((v, i, i)),
        }
    }
    if measure_tol > 0.0 && runs.len() > 2 {
        let min_len = measure_tol * analyzed_until;
        loop {
            let short = (1..runs.len() - 1).find(|&k| {
                let (_, a, b) = runs[k];
                0.5 * (x[b + 1] + x[b]) - 0.5 * (x[a] + x[a - 1]) < min_len
            });
            let Some(k) = short else { break };
            let (_, _, b) = runs[k + 1];
            runs[k - 1].2 = b;
            runs.drain(k..=k + 1);
            if runs.len() <= 2 {
                break;
            }
        }
    }
    let mut rings = Vec::new();
    let mut interrings = Vec::new();
    if !runs[0].0 {
        // no ring at the origin: there is no ring domain
        return RingSegmentation {
            rings,
            interrings,
            x_star: 0.0,
            analyzed_until,
        };
    }
    for (k, &(v, a, b)) in runs.iter().enumerate() {
        let start = if a == 0 { 0.0 } else { 0.5 * (x[a - 1] + x[a]) };
        let end = if k + 1 == runs.len() {
            None
        } else {
            Some(0.5 * (x[b] + x[b + 1]))
        };
        let iv = Interval { start, end };
        if v {
            rings.push(iv);
        } else {
            interrings.push(iv);
        }
    }
    RingSegmentation {
        rings,
        interrings,
        x_star: analyzed_until,
        analyzed_until,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClass {
    Regular,
    /// Ignition on the source parabola.
    Degenerate,
    /// Discrete discontinuity of the front.
    Jump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClassification {
    /// `(node, class)` for every front node.
    pub nodes: Vec<(usize, BoundaryClass)>,
    pub regular: usize,
    pub degenerate: usize,
    pub jump: usize,
    /// `(ring start position, l, (x/alpha)^2, within tolerance)` for each run of `I`.
    pub ring_starts: Vec<(f64, f64, f64, bool)>,
}

/// Tolerance on `|l(x) - x^2/alpha^2|`: the uncertainty of `x^2/alpha^2`
/// propagated from the grid.
pub fn parabola_tol(x: f64, alpha: f64, grid: &GridSpec) -> f64 {
    (2.0 * grid.dt).max(4.0 * grid.dx * x / (alpha * alpha))
}

pub const DEFAULT_JUMP_FACTOR: f64 = 50.0;

pub fn classify_boundary(
    front: &FrontFunction,
    params: &ModelParams,
    grid: &GridSpec,
) -> BoundaryClassification {
    classify_boundary_with(front, params, grid, DEFAULT_JUMP_FACTOR)
}

pub fn classify_boundary_with(
    front: &FrontFunction,
    params: &ModelParams,
    grid: &GridSpec,
    jump_factor: f64,
) -> BoundaryClassification {
    let alpha = params.alpha;
    let mut increments = Vec::new();
    for (a, b) in front.ranges() {
        for i in a + 1..=b {
            increments.push(front.ell[i].unwrap() - front.ell[i - 1].unwrap());
        }
    }
    let median = median(&mut increments.clone());

    let mut nodes = Vec::new();
    let (mut regular, mut degenerate, mut jump) = (0, 0, 0);
    let ranges = front.ranges();
    for &(a, b) in &ranges {
        for i in a..=b {
            let l = front.ell[i].unwrap();
            let x = front.x[i];
            let on_parabola = (l - x * x / (alpha * alpha)).abs() <= parabola_tol(x, alpha, grid);
            let inc = if i > a {
                l - front.ell[i - 1].unwrap()
            } else {
                0.0
            };
            let class = if on_parabola {
                BoundaryClass::Degenerate
            } else if i > a && median.is_some_and(|m| inc > jump_factor * m) {
                BoundaryClass::Jump
            } else {
                BoundaryClass::Regular
            };
            match class {
                BoundaryClass::Regular => regular += 1,
                BoundaryClass::Degenerate => degenerate += 1,
                BoundaryClass::Jump => jump += 1,
            }
            nodes.push((i, class));
        }
    }
    let ring_starts = ranges
        .iter()
        .map(|&(a, _)| {
            let x = front.x[a];
            let l = front.ell[a].unwrap();
            let target = x * x / (alpha * alpha);
            (
                x,
                l,
                target,
                (l - target).abs() <= parabola_tol(x, alpha, grid),
            )
        })
        .collect();
    BoundaryClassification {
        nodes,
        regular,
        degenerate,
        jump,
        ring_starts,
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Worst margin of `l(y2) - l(y1) >= C_ell (y2^2 - y1^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub pairs: usize,
    pub worst_margin: f64,
    pub worst_pair: Option<(f64, f64)>,
    pub tol: f64,
    pub holds: bool,
}

/// Checks the quadratic growth bound on every node pair of the first ring
/// with `x <= L` and `l <= T2`.
pub fn front_slope_check(
    front: &FrontFunction,
    constants: &ModelConstants,
    tol: f64,
) -> SlopeReport {
    let first = front.ranges().into_iter().next();
    let nodes: Vec<usize> = match first {
        Some((a, b)) => (a..=b)
            .filter(|&i| {
                front.x[i] <= constants.ring_width && front.ell[i].unwrap() <= constants.t2
            })
            .collect(),
        None => Vec::new(),
    };
    let mut worst = f64::INFINITY;
    let mut worst_pair = None;
    let mut pairs = 0;
    for (k, &i) in nodes.iter().enumerate() {
        for &j in &nodes[k + 1..] {
            let (y1, y2) = (front.x[i], front.x[j]);
            let margin = (front.ell[j].unwrap() - front.ell[i].unwrap())
                - constants.c_ell * (y2 * y2 - y1 * y1);
            pairs += 1;
            if margin < worst {
                worst = margin;
                worst_pair = Some((y1, y2));
            }
        }
    }
    SlopeReport {
        pairs,
        worst_margin: worst,
        worst_pair,
        tol,
        holds: worst >= -tol,
    }
}

/// Ties and decreases of `l` between consecutive precipitated nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub nodes: usize,
    pub ties: Vec<usize>,
    pub decreases: Vec<usize>,
}

impl MonotonicityReport {
    pub fn tie_fraction(&self) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            self.ties.len() as f64 / self.nodes as f64
        }
    }
}

pub fn monotonicity(front: &FrontFunction) -> MonotonicityReport {
    let mut ties = Vec::new();
    let mut decreases = Vec::new();
    let mut nodes = 0;
    for (a, b) in front.ranges() {
        nodes += b - a + 1;
        for i in a + 1..=b {
            let (l0, l1) = (front.ell[i - 1].unwrap(), front.ell[i].unwrap());
            if l1 == l0 {
                ties.push(i);
            } else if l1 < l0 {
                decreases.push(i);
            }
        }
    }
    MonotonicityReport {
        nodes,
        ties,
        decreases,
    }
}

/// Envelope `(y/alpha*)^2 - tol <= l(y) <= y^2/alpha^2 + tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub checked: usize,
    /// `min_y l(y) - (y/alpha*)^2`
    pub lower_margin: f64,
    /// `min_y y^2/alpha^2 - l(y)`
    pub upper_margin: f64,
    pub violations: Vec<usize>,
}

pub fn envelope_check(
    front: &FrontFunction,
    alpha: f64,
    alpha_star: f64,
    tol: f64,
) -> EnvelopeReport {
    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::INFINITY;
    let mut violations = Vec::new();
    let mut checked = 0;
    for i in front.domain() {
        let y = front.x[i];
        let l = front.ell[i].unwrap();
        let lo = l - (y / alpha_star).powi(2);
        let hi = (y / alpha).powi(2) - l;
        lower_margin = lower_margin.min(lo);
        upper_margin = upper_margin.min(hi);
        if lo < -tol || hi < -tol {
            violations.push(i);
        }
        checked += 1;
    }
    EnvelopeReport {
        checked,
        lower_margin,
        upper_margin,
        violations,
    }
}

/// Node-steps where the recorded `p` differs from `H(t - l(x))` on `I`,
/// ignoring steps within one `dt` of ignition. Returns `(snapshot, node)`.
pub fn canonical_p_mismatches(
    record: &SolutionRecord,
    front: &FrontFunction,
) -> Vec<(usize, usize)> {
    let dt = record.grid.dt;
    let mut out = Vec::new();
    for (k, (&t, p)) in record.times.iter().zip(&record.p).enumerate() {
        for (i, &pv) in p.iter().enumerate() {
            let l = front.ell.get(i).copied().flatten();
            if l.is_some_and(|l| (t - l).abs() <= dt * (1.0 + 1e-9)) {
                continue;
            }
            let canonical = if l.is_some_and(|l| t >= l) { 1.0 } else { 0.0 };
            if pv != canonical {
                out.push((k, i));
            }
        }
    }
    out
}

/// JSON-facing summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    #[serde(rename = "I_ranges")]
    pub i_ranges: Vec<(f64, f64)>,
    pub ell: Vec<Option<f64>>,
    pub rings: Vec<Interval>,
    pub interrings: Vec<Interval>,
    #[serde(rename = "X_star")]
    pub x_star: f64,
    pub classification: ClassHistogram,
    pub residuals: FrontResiduals,
    pub ring_starts: Vec<(f64, f64, f64, bool)>,
    pub monotonicity: MonotonicityReport,
    pub envelope: Option<EnvelopeReport>,
    pub slope: Option<SlopeReport>,
    /// Width of the first ring, or the observed extent if it is still open.
    pub first_ring_width: Option<f64>,
    pub first_ring_closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub regular: usize,
    pub degenerate: usize,
    pub jump: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontResiduals {
    pub max_abs: f64,
    pub at_x: Option<f64>,
    /// `10 (dx + dt/dx)`
    pub bound: f64,
}

/// Runs the full front pipeline on a record.
pub fn analyze(record: &SolutionRecord, measure_tol: f64, jump_factor: f64) -> Result<FrontReport> {
    let front = extract_front(record)?;
    let seg = segment_rings(record, measure_tol);
    let cls = classify_boundary_with(&front, &record.params, &record.grid, jump_factor);
    let g = &record.grid;
    let envelope = record
        .constants
        .map(|c| envelope_check(&front, record.params.alpha, c.alpha_star, g.dt));
    let slope = record
        .constants
        .map(|c| front_slope_check(&front, &c, g.dt));
    Ok(FrontReport {
        i_ranges: front
            .ranges()
            .iter()
            .map(|&(a, b)| (front.x[a], front.x[b]))
            .collect(),
        ell: front.ell.clone(),
        first_ring_width: seg
            .rings
            .first()
            .map(|r| r.end.unwrap_or(seg.analyzed_until) - r.start),
        first_ring_closed: seg.rings.first().is_some_and(|r| r.end.is_some()),
        rings: seg.rings,
        interrings: seg.interrings,
        x_star: seg.x_star,
        classification: ClassHistogram {
            regular: cls.regular,
            degenerate: cls.degenerate,
            jump: cls.jump,
        },
        residuals: FrontResiduals {
            max_abs: front.max_residual,
            at_x: front.max_residual_node.map(|i| front.x[i]),
            bound: 10.0 * (g.dx + g.dt / g.dx),
        },
        ring_starts: cls.ring_starts,
        monotonicity: monotonicity(&front),
        envelope,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(n: usize, dx: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dx).collect()
    }

    #[test]
    fn pattern_breakpoints() {
        let x = nodes(7, 1.0);
        let seg = segment_pattern(&x, &[1., 1., 0., 0., 1., 1., 0.], 0.0);
        assert_eq!(seg.rings.len(), 2);
        assert_eq!(seg.interrings.len(), 2);
        assert_eq!(
            seg.rings[0],
            Interval {
                start: 0.0,
                end: Some(1.5)
            }
        );
        assert_eq!(
            seg.interrings[0],
            Interval {
                start: 1.5,
                end: Some(3.5)
            }
        );
        assert_eq!(
            seg.rings[1],
            Interval {
                start: 3.5,
                end: Some(5.5)
            }
        );
        assert_eq!(
            seg.interrings[1],
            Interval {
                start: 5.5,
                end: None
            }
        );
    }

    #[test]
    fn single_ring_then_open_interring() {
        let x = nodes(10, 0.1);
        let p: Vec<f64> = (0..10).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let seg = segment_pattern(&x, &p, 0.0);
        assert_eq!(seg.rings.len(), 1);
        assert_eq!(seg.interrings.len(), 1);
        assert!(seg.interrings[0].end.is_none());
        assert!((seg.rings[0].width() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn short_runs_merged() {
        let x = nodes(20, 1.0);
        let mut p = vec![1.0; 20];
        p[5] = 0.0;
        for v in &mut p[12..] {
            *v = 0.0;
        }
        let plain = segment_pattern(&x, &p, 0.0);
        assert_eq!(plain.rings.len(), 2);
        let merged = segment_pattern(&x, &p, 0.1);
        assert_eq!(merged.rings.len(), 1);
        assert_eq!(merged.rings[0].end, Some(11.5));
    }

    #[test]
    fn no_ring_at_origin() {
        let seg = segment_pattern(&nodes(3, 1.0), &[0.0, 1.0, 1.0], 0.0);
        assert!(seg.rings.is_empty());
        assert_eq!(seg.x_star, 0.0);
    }

    fn grid() -> GridSpec {
        GridSpec::new(0.01, 1e-5, 2.0, 1.0).unwrap()
    }

    #[test]
    fn jump_flagged_after_large_step() {
        let x = nodes(40, 0.01);
        let params = ModelParams::new(1.0, 1.0, 0.3).unwrap();
        // ramp far from the parabola
        let mut ell: Vec<Option<f64>> = (0..40).map(|i| Some(0.5 + 1e-4 * i as f64)).collect();
        for l in ell.iter_mut().skip(20) {
            *l = Some(l.unwrap() + 100.0 * 1e-4);
        }
        let front = FrontFunction::from_parts(x, ell);
        let c = classify_boundary(&front, &params, &grid());
        let flagged: Vec<usize> = c
            .nodes
            .iter()
            .filter(|(_, k)| *k == BoundaryClass::Jump)
            .map(|(i, _)| *i)
            .collect();
        assert_eq!(flagged, vec![20]);
    }

    #[test]
    fn origin_is_degenerate() {
        let x = nodes(5, 0.01);
        let ell = (0..5)
            .map(|i| Some((x[i] / 1.2f64).powi(2) + 1e-5))
            .collect();
        let params = ModelParams::new(1.0, 1.0, 0.3).unwrap();
        let c = classify_boundary(&FrontFunction::from_parts(x, ell), &params, &grid());
        assert_eq!(c.nodes[0], (0, BoundaryClass::Degenerate));
        assert!(c.ring_starts[0].3);
    }

    fn constants() -> ModelConstants {
        let p = ModelParams::with_threshold_fraction(1.0, 1.0, 0.8).unwrap();
        ModelConstants::compute(&p, None).unwrap()
    }

    #[test]
    fn slope_on_exact_parabola() {
        let c = constants();
        let x = nodes(200, 0.0025);
        let ell = x.iter().map(|&y| Some(y * y)).collect();
        let r = front_slope_check(&FrontFunction::from_parts(x, ell), &c, 0.0);
        // alpha = 1: holds iff C_ell <= 1
        assert!(c.c_ell <= 1.0);
        assert!(r.holds && r.worst_margin >= 0.0);
        assert!(r.pairs > 100);
    }

    #[test]
    fn slope_two_nodes() {
        let c = constants();
        let r = front_slope_check(
            &FrontFunction::from_parts(vec![0.0, 0.01], vec![Some(0.0), Some(1e-4)]),
            &c,
            0.0,
        );
        assert_eq!(r.pairs, 1);
    }

    #[test]
    fn monotonicity_flags() {
        let f = FrontFunction::from_parts(
            nodes(4, 1.0),
            vec![Some(0.0), Some(1.0), Some(1.0), Some(0.5)],
        );
        let m = monotonicity(&f);
        assert_eq!(m.ties, vec![2]);
        assert_eq!(m.decreases, vec![3]);
    }

    #[test]
    fn front_position_interpolates() {
        let f =
            FrontFunction::from_parts(nodes(4, 1.0), vec![Some(0.0), Some(1.0), Some(3.0), None]);
        assert_eq!(f.position_at(2.0), Some(1.5));
        assert_eq!(f.position_at(5.0), Some(2.0));
        assert_eq!(f.position_at(-1.0), None);
    }
}
