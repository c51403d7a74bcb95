//! Time stepping on the truncated half-line `[0, x_max]`.
//!
//! The primary scheme advances the deficit `w = u - psi`, which satisfies the
//! sourceless equation `w_t = w_xx - p (w + psi)` with `w(., 0) = 0`. The moving
//! Dirac source is carried entirely by the closed-form `psi`. Diffusion is
//! Crank–Nicolson, the sink is implicit in `u` with `p` lagged by one step,
//! and both ends use the ghost-node Neumann closure.
//!
//! A second scheme integrates `u` itself and deposits the source mass on the
//! grid each step; it exists only as a cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ModelConstants, ModelParams};
use crate::relay::{RelayKind, RelayState};

/// Number of past fields kept for the backward-difference ladder `dt, 2dt, 4dt, 8dt`.
const HISTORY: usize = 9;
/// Lags (in steps) of the temporal stencil recorded at ignition.
pub const STENCIL_LAGS: [usize; 5] = [0, 1, 2, 4, 8];
/// Number of nodes (including the ignition node) in the spatial stencil.
pub const STENCIL_WIDTH: usize = 5;

/// Source position from which deposition includes the `[u_xx]` jump.
pub const JUMP_CORRECTION_ONSET: f64 = 0.1;

/// Uniform space-time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dx: f64,
    pub dt: f64,
    pub x_max: f64,
    pub t_max: f64,
    /// Number of cells; nodes are `0..=n_x`.
    pub n_x: usize,
    /// Number of time steps.
    pub n_t: usize,
}

impl GridSpec {
    /// Snaps `x_max` and `t_max` to whole multiples of `dx` and `dt` (rounding up).
    pub fn new(dx: f64, dt: f64, x_max: f64, t_max: f64) -> Result<Self> {
        let mut problems = Vec::new();
        for (name, v) in [("dx", dx), ("dt", dt), ("x_max", x_max), ("t_max", t_max)] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if problems.is_empty() && x_max < 2.0 * dx {
            problems.push(format!(
                "x_max = {x_max} must span at least two cells of dx = {dx}"
            ));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let n_x = (x_max / dx - 1e-9).ceil() as usize;
        let n_t = (t_max / dt - 1e-9).ceil() as usize;
        Ok(Self {
            dx,
            dt,
            x_max: n_x as f64 * dx,
            t_max: n_t as f64 * dt,
            n_x,
            n_t,
        })
    }

    /// Desk-scale default: `dx = 2.5e-3`, `dt = 0.4 dx^2`, `t_max = 2 (L/alpha*)^2`,
    /// `x_max = max(6, alpha* sqrt(t_max) + 6 sqrt(t_max))`.
    pub fn default_for(constants: &ModelConstants) -> Result<Self> {
        let dx = 2.5e-3;
        let t_max = 2.0 * constants.t2_ceiling();
        Self::new(
            dx,
            0.4 * dx * dx,
            default_x_max(constants.alpha_star, t_max),
            t_max,
        )
    }

    pub fn nodes(&self) -> usize {
        self.n_x + 1
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Diffusion number `dt / dx^2`.
    pub fn mesh_ratio(&self) -> f64 {
        self.dt / (self.dx * self.dx)
    }

    /// Checks the truncation rule `x_max >= alpha* sqrt(t_max) + 6 sqrt(t_max)`.
    pub fn truncation_ok(&self, alpha_star: f64) -> bool {
        self.x_max + 1e-12 >= (alpha_star + 6.0) * self.t_max.sqrt()
    }
}

fn default_x_max(alpha_star: f64, t_max: f64) -> f64 {
    ((alpha_star + 6.0) * t_max.sqrt()).max(6.0)
}

/// Which quantity the time stepper carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `w = u - psi` with closed-form `psi`.
    Deficit,
    /// `u` directly, with the source deposited on the two bracketing nodes.
    Deposition,
}

/// Run-level options beyond params, grid and relay law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub scheme: Scheme,
    /// Keep a snapshot every `snapshot_stride` steps (plus the final state).
    pub snapshot_stride: usize,
    /// Force `p = 0` for the whole run.
    pub relay_disabled: bool,
    /// Only nodes with `x <= store_x_max` are kept in snapshots.
    pub store_x_max: Option<f64>,
    /// Upper limit for the measured `T1`; defaults to `(L/alpha*)^2`.
    pub t1_ceiling: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Deficit,
            snapshot_stride: 100,
            relay_disabled: false,
            store_x_max: None,
            t1_ceiling: None,
        }
    }
}

/// Local history of `u` captured when a node ignites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnitionStencil {
    pub t: f64,
    /// Elapsed times `t - s` for the samples in `u_time` (lags of 0, 1, 2, 4, 8 steps,
    /// clamped at `t = 0`).
    pub lags: [f64; 5],
    pub u_time: [f64; 5],
    /// `u(x_{i+j}, t)` for `j = 0..5`; `NaN` past the end of the grid.
    pub u_space: [f64; 5],
}

/// Stored space-time history of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub params: ModelParams,
    pub constants: Option<ModelConstants>,
    pub grid: GridSpec,
    pub relay: RelayKind,
    pub options: RunOptions,
    /// Stored node positions (a prefix of the grid).
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub accumulator: Vec<Vec<f64>>,
    /// Ignition time per stored node.
    pub ignition_time: Vec<Option<f64>>,
    pub stencils: Vec<Option<IgnitionStencil>>,
    /// Outcome of the `T1` scan, when constants exist.
    pub t1_scan: Option<T1Scan>,
}

impl SolutionRecord {
    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn final_p(&self) -> &[f64] {
        self.p.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Index of the snapshot whose time is closest to `t`.
    pub fn snapshot_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return 0;
        }
        if k >= self.times.len() {
            return self.times.len() - 1;
        }
        if (self.times[k] - t).abs() < (t - self.times[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }

    /// Index of the node closest to `x`.
    pub fn node_index(&self, x: f64) -> usize {
        let i = (x / self.grid.dx).round().max(0.0) as usize;
        i.min(self.x.len().saturating_sub(1))
    }
}

/// Result of scanning a record for the first failure of
/// `u_x <= -(alpha beta / (4 sqrt t)) e^{(alpha^2 - alpha*^2)/4}` on
/// `ES(t) = {alpha sqrt t < y < alpha* sqrt t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T1Scan {
    pub t1: f64,
    /// First `(x, t)` where the bound failed, if any before the ceiling.
    pub failure: Option<(f64, f64)>,
    /// Last snapshot time inspected.
    pub scanned_until: f64,
    pub ceiling: f64,
}

/// Time stepper state.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: ModelParams,
    grid: GridSpec,
    kind: RelayKind,
    scheme: Scheme,
    relay_disabled: bool,
    alpha_star: Option<f64>,
    /// Ring buffer of the carried field (`w` or `u`); `history[head]` is current.
    history: Vec<Vec<f64>>,
    head: usize,
    n: usize,
    relay: RelayState,
    stencils: Vec<Option<IgnitionStencil>>,
    // scratch
    rhs: Vec<f64>,
    diag: Vec<f64>,
    cprime: Vec<f64>,
    /// Inverse pivots of the factorization; valid while `diag == factored`.
    inv_pivot: Vec<f64>,
    factored: Vec<f64>,
    /// Length of the prefix of `diag` that may carry a sink term.
    diag_extent: usize,
    /// Every stored deficit field is exactly zero.
    w_zero: bool,
    psi_next: Vec<f64>,
    u_next: Vec<f64>,
}

impl Simulation {
    pub fn new(
        params: ModelParams,
        grid: GridSpec,
        kind: RelayKind,
        scheme: Scheme,
    ) -> Result<Self> {
        params.validate()?;
        kind.validate()?;
        let n = grid.nodes();
        let alpha_star = if params.is_supercritical() {
            Some(model::solve_alpha_star(&params)?)
        } else {
            None
        };
        let x: Vec<f64> = (0..n).map(|i| grid.x(i)).collect();
        Ok(Self {
            params,
            grid,
            kind,
            scheme,
            relay_disabled: false,
            alpha_star,
            history: vec![vec![0.0; n]; HISTORY],
            head: 0,
            n: 0,
            relay: RelayState::new(x),
            stencils: vec![None; n],
            rhs: vec![0.0; n],
            diag: vec![1.0 + 2.0 * (0.5 * grid.mesh_ratio()); n],
            cprime: vec![0.0; n],
            inv_pivot: vec![0.0; n],
            factored: Vec::new(),
            diag_extent: 0,
            w_zero: true,
            psi_next: Vec::with_capacity(n),
            u_next: Vec::with_capacity(n),
        })
    }

    /// Forces `p = 0` for every subsequent step.
    pub fn disable_relay(&mut self) {
        self.relay_disabled = true;
    }

    pub fn time(&self) -> f64 {
        self.grid.t(self.n)
    }

    pub fn steps_taken(&self) -> usize {
        self.n
    }

    pub fn relay(&self) -> &RelayState {
        &self.relay
    }

    /// Carried field: `w` for the deficit scheme, `u` for deposition.
    pub fn state(&self) -> &[f64] {
        &self.history[self.head]
    }

    fn lagged(&self, lag: usize) -> &[f64] {
        &self.history[(self.head + HISTORY - lag) % HISTORY]
    }

    fn psi_at(&self, i: usize, t: f64) -> f64 {
        model::psi(self.grid.x(i), t, &self.params)
    }

    /// `u` on every node at the current time.
    pub fn u_field(&self) -> Vec<f64> {
        let t = self.time();
        match self.scheme {
            Scheme::Deficit => self
                .state()
                .iter()
                .enumerate()
                .map(|(i, &w)| w + self.psi_at(i, t))
                .collect(),
            Scheme::Deposition => self.state().to_vec(),
        }
    }

    /// `w = u - psi` on every node at the current time.
    pub fn w_field(&self) -> Vec<f64> {
        let t = self.time();
        match self.scheme {
            Scheme::Deficit => self.state().to_vec(),
            Scheme::Deposition => self
                .state()
                .iter()
                .enumerate()
                .map(|(i, &u)| u - self.psi_at(i, t))
                .collect(),
        }
    }

    /// Nodes that may reach the threshold at time `t`. Relies on `u <= psi`,
    /// which the deficit scheme preserves exactly when `dt <= dx^2`.
    fn active_nodes(&self, t: f64) -> usize {
        let n = self.grid.nodes();
        if self.relay_disabled || !self.params.u_star.is_finite() {
            return 0;
        }
        match (self.scheme, self.alpha_star) {
            (Scheme::Deposition, _) => n,
            (Scheme::Deficit, None) => 0,
            (Scheme::Deficit, Some(a_star)) if self.grid.mesh_ratio() <= 1.0 => {
                let edge = a_star * t.sqrt() / self.grid.dx;
                ((edge.floor() as usize) + 3).min(n)
            }
            (Scheme::Deficit, Some(_)) => n,
        }
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<()> {
        let g = self.grid;
        let n_nodes = g.nodes();
        let t_old = g.t(self.n);
        let t_new = g.t(self.n + 1);
        let r = g.mesh_ratio();
        let theta = 0.5;
        let a = theta * r;
        let b = (1.0 - theta) * r;
        let dt = g.dt;

        // psi at the new time where the sink or the relay may need it
        let active = self.active_nodes(t_new);
        let sink_nodes = if self.relay_disabled {
            0
        } else {
            self.relay
                .p
                .iter()
                .rposition(|&p| p > 0.0)
                .map_or(0, |i| i + 1)
        };
        let psi_nodes = match self.scheme {
            Scheme::Deficit => active.max(sink_nodes),
            Scheme::Deposition => 0,
        };
        self.psi_next.clear();
        for i in 0..psi_nodes {
            let psi = model::psi(g.x(i), t_new, &self.params);
            self.psi_next.push(psi);
        }

        // A deficit that is still identically zero with no sink stays zero.
        let next = (self.head + 1) % HISTORY;
        let quiet = self.scheme == Scheme::Deficit && sink_nodes == 0 && self.w_zero;
        self.w_zero = quiet;
        if !quiet {
            explicit_half(&self.history[self.head], b, &mut self.rhs);

            // only the sink prefix can differ from the bare diffusion diagonal
            let touched = self.diag_extent.max(sink_nodes);
            for d in &mut self.diag[..touched] {
                *d = 1.0 + 2.0 * a;
            }
            for i in 0..sink_nodes {
                let p = self.relay.p[i];
                if p > 0.0 {
                    self.diag[i] += dt * p;
                    if self.scheme == Scheme::Deficit {
                        self.rhs[i] -= dt * p * self.psi_next[i];
                    }
                }
            }
            self.diag_extent = sink_nodes;

            if self.scheme == Scheme::Deposition {
                self.deposit(t_old, t_new);
            }

            // Thomas algorithm; the Neumann rows carry -2a off the diagonal.
            {
                let last = n_nodes - 1;
                let out = &mut self.history[next];
                let upper = |i: usize| if i == 0 { -2.0 * a } else { -a };
                let lower = |i: usize| if i == last { -2.0 * a } else { -a };
                if self.factored.len() != n_nodes
                    || self.factored[..touched] != self.diag[..touched]
                {
                    self.inv_pivot[0] = 1.0 / self.diag[0];
                    self.cprime[0] = upper(0) * self.inv_pivot[0];
                    for i in 1..n_nodes {
                        let m = self.diag[i] - lower(i) * self.cprime[i - 1];
                        self.inv_pivot[i] = 1.0 / m;
                        self.cprime[i] = if i < last { upper(i) / m } else { 0.0 };
                    }
                    self.factored.clone_from(&self.diag);
                }
                let sum = substitute(&self.rhs, &self.inv_pivot, &self.cprime, a, out);
                if !sum.is_finite() {
                    let bad = out.iter().position(|v| !v.is_finite()).unwrap_or(0);
                    return Err(Error::NonFiniteField {
                        node: bad,
                        t: t_new,
                    });
                }
            }
        }
        self.head = next;
        self.n += 1;

        // relay update from the new u; p takes effect next step
        if active > 0 {
            self.u_next.clear();
            let v = &self.history[self.head];
            match self.scheme {
                Scheme::Deficit => {
                    self.u_next
                        .extend((0..active).map(|i| v[i] + self.psi_next[i]));
                }
                Scheme::Deposition => self.u_next.extend_from_slice(&v[..active]),
            }
            let p = &self.params;
            self.relay
                .accumulate_prefix(&self.u_next, p.u_star, dt, t_new, self.kind, p.alpha);
            for i in 0..active {
                if self.stencils[i].is_none() && self.relay.ignition_time[i] == Some(t_new) {
                    self.stencils[i] = Some(self.capture_stencil(i, t_new));
                }
            }
        }
        Ok(())
    }

    /// Adds the source mass `alpha beta (sqrt t_new - sqrt t_old)` at the
    /// midpoint position of the source, split linearly between the two
    /// nodes around it. Once the source is past [`JUMP_CORRECTION_ONSET`]
    /// the split also carries the curvature jump; without it the error is
    /// only of order `dx^1.5` because the split's second moment oscillates
    /// as the source crosses cells. Starting the correction at a fixed
    /// position keeps it out of the early steps where the source sits
    /// within a few cells of the origin.
    fn deposit(&mut self, t_old: f64, t_new: f64) {
        let p = &self.params;
        let g = self.grid;
        let mass = p.alpha * p.beta * (t_new.sqrt() - t_old.sqrt());
        let y = 0.5 * p.alpha * (t_old.sqrt() + t_new.sqrt());
        let s = y / g.dx;
        let j = s.floor() as usize;
        if y >= JUMP_CORRECTION_ONSET && j >= 1 && j + 1 < g.n_x {
            // Hat weights fix the [u_x] jump; the extra terms account for
            // [u_xx] = q * speed across the cell holding the source.
            let f = s - j as f64;
            let tm = 0.5 * (t_old + t_new);
            let jump = p.alpha * p.alpha * p.beta / (4.0 * tm) * (t_new - t_old);
            self.rhs[j] += mass * (1.0 - f) / g.dx - 0.5 * jump * (1.0 - f) * (1.0 - f);
            self.rhs[j + 1] += mass * f / g.dx + 0.5 * jump * f * f;
            return;
        }
        let j = s.floor() as usize;
        if j >= g.n_x {
            return;
        }
        let frac = s - j as f64;
        let weight = |i: usize| {
            if i == 0 || i == g.n_x {
                0.5 * g.dx
            } else {
                g.dx
            }
        };
        self.rhs[j] += mass * (1.0 - frac) / weight(j);
        self.rhs[j + 1] += mass * frac / weight(j + 1);
    }

    fn u_lagged(&self, i: usize, lag: usize) -> f64 {
        let lag = lag.min(self.n);
        let v = self.lagged(lag)[i];
        match self.scheme {
            Scheme::Deficit => v + self.psi_at(i, self.grid.t(self.n - lag)),
            Scheme::Deposition => v,
        }
    }

    fn capture_stencil(&self, i: usize, t: f64) -> IgnitionStencil {
        let mut lags = [0.0; 5];
        let mut u_time = [0.0; 5];
        for (k, &lag) in STENCIL_LAGS.iter().enumerate() {
            let lag = lag.min(self.n);
            lags[k] = lag as f64 * self.grid.dt;
            u_time[k] = self.u_lagged(i, lag);
        }
        let mut u_space = [f64::NAN; 5];
        for (j, slot) in u_space.iter_mut().enumerate() {
            if i + j < self.grid.nodes() {
                *slot = self.u_lagged(i + j, 0);
            }
        }
        IgnitionStencil {
            t,
            lags,
            u_time,
            u_space,
        }
    }

    pub fn stencils(&self) -> &[Option<IgnitionStencil>] {
        &self.stencils
    }
}

/// `rhs = v + b D2 v` with the Neumann ghost rows.
fn explicit_half(v: &[f64], b: f64, rhs: &mut [f64]) {
    let n = v.len();
    let last = n - 1;
    let rhs = &mut rhs[..n];
    rhs[0] = v[0] + b * 2.0 * (v[1] - v[0]);
    for i in 1..last {
        rhs[i] = v[i] + b * (v[i - 1] - 2.0 * v[i] + v[i + 1]);
    }
    rhs[last] = v[last] + b * 2.0 * (v[last - 1] - v[last]);
}

/// Forward and back substitution with a stored factorization; returns the
/// sum of the solution so the caller can test finiteness without another pass.
fn substitute(rhs: &[f64], inv_pivot: &[f64], cprime: &[f64], a: f64, out: &mut [f64]) -> f64 {
    let n = out.len();
    let last = n - 1;
    let (rhs, inv_pivot, cprime) = (&rhs[..n], &inv_pivot[..n], &cprime[..n]);
    out[0] = rhs[0] * inv_pivot[0];
    for i in 1..last {
        out[i] = (rhs[i] + a * out[i - 1]) * inv_pivot[i];
    }
    out[last] = (rhs[last] + 2.0 * a * out[last - 1]) * inv_pivot[last];
    let mut sum = out[last];
    for i in (0..last).rev() {
        out[i] -= cprime[i] * out[i + 1];
        sum += out[i];
    }
    sum
}

/// Runs the deficit scheme with default options and the given stride.
pub fn run(
    params: &ModelParams,
    grid: &GridSpec,
    kind: RelayKind,
    snapshot_stride: usize,
) -> Result<SolutionRecord> {
    run_with(
        params,
        grid,
        kind,
        &RunOptions {
            snapshot_stride,
            ..RunOptions::default()
        },
    )
}

/// Runs the source-deposition cross-check scheme.
pub fn source_deposition_run(
    params: &ModelParams,
    grid: &GridSpec,
    kind: RelayKind,
    snapshot_stride: usize,
) -> Result<SolutionRecord> {
    run_with(
        params,
        grid,
        kind,
        &RunOptions {
            scheme: Scheme::Deposition,
            snapshot_stride,
            ..RunOptions::default()
        },
    )
}

/// Full run: snapshots at `t = 0`, every `snapshot_stride` steps, and at `t_max`.
pub fn run_with(
    params: &ModelParams,
    grid: &GridSpec,
    kind: RelayKind,
    options: &RunOptions,
) -> Result<SolutionRecord> {
    if options.snapshot_stride == 0 {
        return Err(Error::Validation(vec![
            "snapshot_stride must be at least 1".into(),
        ]));
    }
    let mut sim = Simulation::new(*params, *grid, kind, options.scheme)?;
    if options.relay_disabled {
        sim.disable_relay();
    }
    let stored = match options.store_x_max {
        Some(xm) => ((xm / grid.dx + 1e-9).floor() as usize + 1).min(grid.nodes()),
        None => grid.nodes(),
    };
    let constants = if params.is_supercritical() {
        Some(ModelConstants::compute(params, None)?)
    } else {
        None
    };
    let mut record = SolutionRecord {
        params: *params,
        constants,
        grid: *grid,
        relay: kind,
        options: *options,
        x: (0..stored).map(|i| grid.x(i)).collect(),
        times: Vec::new(),
        u: Vec::new(),
        w: Vec::new(),
        p: Vec::new(),
        accumulator: Vec::new(),
        ignition_time: Vec::new(),
        stencils: Vec::new(),
        t1_scan: None,
    };
    let snapshot = |sim: &Simulation, rec: &mut SolutionRecord| {
        let mut u = sim.u_field();
        let mut w = sim.w_field();
        u.truncate(stored);
        w.truncate(stored);
        rec.times.push(sim.time());
        rec.u.push(u);
        rec.w.push(w);
        rec.p.push(sim.relay.p[..stored].to_vec());
        rec.accumulator
            .push(sim.relay.accumulator[..stored].to_vec());
    };
    snapshot(&sim, &mut record);
    while sim.steps_taken() < grid.n_t {
        sim.step()?;
        let n = sim.steps_taken();
        if n % options.snapshot_stride == 0 || n == grid.n_t {
            snapshot(&sim, &mut record);
        }
    }
    record.ignition_time = sim.relay.ignition_time[..stored].to_vec();
    record.stencils = sim.stencils[..stored].to_vec();

    if let Some(c) = record.constants {
        let ceiling = options.t1_ceiling.unwrap_or(c.t2_ceiling());
        let scan = measure_t1(&record, ceiling)?;
        record.constants = Some(ModelConstants::compute(params, Some(scan.t1))?);
        record.t1_scan = Some(scan);
    }
    Ok(record)
}

/// Spatial derivative of `u` at stored node `i` of snapshot `k`: exact `psi_x`
/// plus a centered difference of the smooth deficit `w`.
pub fn u_x(record: &SolutionRecord, k: usize, i: usize) -> f64 {
    let w = &record.w[k];
    let dx = record.grid.dx;
    let wx = if i == 0 {
        0.0
    } else if i + 1 < w.len() {
        (w[i + 1] - w[i - 1]) / (2.0 * dx)
    } else {
        (w[i] - w[i - 1]) / dx
    };
    wx + model::psi_x(record.x[i], record.times[k], &record.params)
}

/// Scans the snapshots for the first failure of the gradient bound on `ES(t)`.
/// Returns `ceiling` as `T1` when the bound holds up to the ceiling.
pub fn measure_t1(record: &SolutionRecord, ceiling: f64) -> Result<T1Scan> {
    let c = record.constants.ok_or(Error::NotSupercritical {
        u_star: record.params.u_star,
        psi_alpha: record.params.psi_alpha(),
    })?;
    let alpha = record.params.alpha;
    let mut scanned_until = 0.0;
    for (k, &t) in record.times.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        if t > ceiling {
            break;
        }
        scanned_until = t;
        let lo = alpha * t.sqrt();
        let hi = c.alpha_star * t.sqrt();
        let bound = c.gradient_bound(&record.params, t);
        for (i, &x) in record.x.iter().enumerate() {
            if x <= lo || i == 0 {
                continue;
            }
            if x >= hi {
                break;
            }
            if u_x(record, k, i) > bound {
                return Ok(T1Scan {
                    t1: t,
                    failure: Some((x, t)),
                    scanned_until,
                    ceiling,
                });
            }
        }
    }
    Ok(T1Scan {
        t1: ceiling,
        failure: None,
        scanned_until,
        ceiling,
    })
}
