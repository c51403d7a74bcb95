//! Two coupled relay ODEs with threshold 0:
//!
//! ```text
//! u' = f(t) + u + v - p_u,   v' = f(t) + u + v - p_v,   u(0) = v(0) = 0
//! ```
//!
//! Each relay either switches to 1 at `t = 0` or stays 0. Enumerating the four
//! binary policies shows when the switching choice is forced (a transversal
//! crossing) and when it is not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    /// `f(t) = value`
    Constant { value: f64 },
    /// `f(t) = t`
    Linear,
}

impl Forcing {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Forcing::Constant { value } => value,
            Forcing::Linear => t,
        }
    }

    pub fn half() -> Self {
        Forcing::Constant { value: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub forcing: Forcing,
    pub horizon: f64,
    pub dt: f64,
}

impl ToyConfig {
    pub fn new(forcing: Forcing, horizon: f64, dt: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if !(horizon > 0.0 && horizon.is_finite()) {
            problems.push(format!("toy horizon must be positive, got {horizon}"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            problems.push(format!("toy dt must be positive, got {dt}"));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            forcing,
            horizon,
            dt,
        })
    }

    /// Default feasibility tolerance `1e-9 T`.
    pub fn default_tol(&self) -> f64 {
        1e-9 * self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchPolicy {
    pub pu_switches_at_zero: bool,
    pub pv_switches_at_zero: bool,
}

impl SwitchPolicy {
    pub const ALL: [SwitchPolicy; 4] = [
        SwitchPolicy::new(false, false),
        SwitchPolicy::new(true, false),
        SwitchPolicy::new(false, true),
        SwitchPolicy::new(true, true),
    ];

    pub const fn new(pu: bool, pv: bool) -> Self {
        Self {
            pu_switches_at_zero: pu,
            pv_switches_at_zero: pv,
        }
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.pv_switches_at_zero, self.pu_switches_at_zero)
    }

    fn values(&self) -> (f64, f64) {
        (
            if self.pu_switches_at_zero { 1.0 } else { 0.0 },
            if self.pv_switches_at_zero { 1.0 } else { 0.0 },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Classical RK4 with the policy's constant relay values.
pub fn integrate(config: &ToyConfig, policy: SwitchPolicy) -> Trajectories {
    let (pu, pv) = policy.values();
    let f = config.forcing;
    let rhs = |t: f64, u: f64, v: f64| {
        let common = f.eval(t) + (u + v);
        (common - pu, common - pv)
    };
    let steps = (config.horizon / config.dt).round().max(1.0) as usize;
    let h = config.horizon / steps as f64;
    let mut out = Trajectories {
        t: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
    };
    let (mut u, mut v) = (0.0, 0.0);
    out.t.push(0.0);
    out.u.push(u);
    out.v.push(v);
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = rhs(t, u, v);
        let k2 = rhs(t + 0.5 * h, u + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
        let k3 = rhs(t + 0.5 * h, u + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
        let k4 = rhs(t + h, u + h * k3.0, v + h * k3.1);
        u += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        out.t.push((n + 1) as f64 * h);
        out.u.push(u);
        out.v.push(v);
    }
    out
}

/// RK4 for the sum `s = u + v`: `s' = 2 f + 2 s - (p_u + p_v)`.
pub fn integrate_sum(config: &ToyConfig, policy: SwitchPolicy) -> Vec<f64> {
    let (pu, pv) = policy.values();
    let f = config.forcing;
    let rhs = |t: f64, s: f64| 2.0 * f.eval(t) + 2.0 * s - (pu + pv);
    let steps = (config.horizon / config.dt).round().max(1.0) as usize;
    let h = config.horizon / steps as f64;
    let mut s = 0.0;
    let mut out = vec![s];
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = rhs(t, s);
        let k2 = rhs(t + 0.5 * h, s + 0.5 * h * k1);
        let k3 = rhs(t + 0.5 * h, s + 0.5 * h * k2);
        let k4 = rhs(t + h, s + h * k3);
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    U,
    V,
}

/// First sample at which the relay condition fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub component: Component,
    pub t: f64,
    /// Running `int (.)_+` for a relay that stayed off, or the value at the
    /// switch for one that switched.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violation: Option<Violation>,
}

/// Relay condition with threshold 0: a relay that stays off must keep
/// `int_0^t (.)_+` below `tol`; one that switches at 0 must have its
/// component at least `-tol` there.
pub fn feasible(traj: &Trajectories, policy: SwitchPolicy, tol: f64) -> Feasibility {
    let checks = [
        (Component::U, &traj.u, policy.pu_switches_at_zero),
        (Component::V, &traj.v, policy.pv_switches_at_zero),
    ];
    let mut first: Option<Violation> = None;
    for (component, series, switched) in checks {
        let found = if switched {
            (series[0] < -tol).then(|| Violation {
                component,
                t: traj.t[0],
                value: series[0],
            })
        } else {
            let mut integral = 0.0;
            let mut hit = None;
            for n in 1..series.len() {
                let h = traj.t[n] - traj.t[n - 1];
                integral += 0.5 * h * (series[n - 1].max(0.0) + series[n].max(0.0));
                if integral > tol {
                    hit = Some(Violation {
                        component,
                        t: traj.t[n],
                        value: integral,
                    });
                    break;
                }
            }
            hit
        };
        if let Some(v) = found {
            if first.is_none_or(|f| v.t < f.t) {
                first = Some(v);
            }
        }
    }
    Feasibility {
        feasible: first.is_none(),
        violation: first,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Exactly one feasible policy.
    Unique,
    /// Several feasible policies.
    NonUnique,
    /// No binary policy is feasible.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub policy: SwitchPolicy,
    pub feasibility: Feasibility,
    pub u_end: f64,
    pub v_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTable {
    pub config: ToyConfig,
    pub tol: f64,
    pub rows: Vec<ToyRow>,
    pub verdict: Verdict,
}

impl ToyTable {
    pub fn feasible_policies(&self) -> Vec<SwitchPolicy> {
        self.rows
            .iter()
            .filter(|r| r.feasibility.feasible)
            .map(|r| r.policy)
            .collect()
    }

    pub fn row(&self, policy: SwitchPolicy) -> &ToyRow {
        self.rows
            .iter()
            .find(|r| r.policy == policy)
            .expect("all policies enumerated")
    }

    /// Aligned plain-text table.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<6} {:<6} {:<9} {:>14} {:>14}  violation\n",
            "p_u", "p_v", "feasible", "u(T)", "v(T)"
        );
        for r in &self.rows {
            let why = match r.feasibility.violation {
                Some(v) => format!("{:?} at t = {:.4e} ({:.3e})", v.component, v.t, v.value),
                None => "-".into(),
            };
            s += &format!(
                "{:<6} {:<6} {:<9} {:>14.6e} {:>14.6e}  {}\n",
                r.policy.pu_switches_at_zero,
                r.policy.pv_switches_at_zero,
                r.feasibility.feasible,
                r.u_end,
                r.v_end,
                why
            );
        }
        s += &format!("verdict: {:?}\n", self.verdict);
        s
    }
}

pub fn enumerate(config: &ToyConfig) -> ToyTable {
    enumerate_with_tol(config, config.default_tol())
}

pub fn enumerate_with_tol(config: &ToyConfig, tol: f64) -> ToyTable {
    let rows: Vec<ToyRow> = SwitchPolicy::ALL
        .iter()
        .map(|&policy| {
            let traj = integrate(config, policy);
            ToyRow {
                policy,
                feasibility: feasible(&traj, policy, tol),
                u_end: *traj.u.last().unwrap(),
                v_end: *traj.v.last().unwrap(),
            }
        })
        .collect();
    let count = rows.iter().filter(|r| r.feasibility.feasible).count();
    let verdict = match count {
        0 => Verdict::Infeasible,
        1 => Verdict::Unique,
        _ => Verdict::NonUnique,
    };
    ToyTable {
        config: *config,
        tol,
        rows,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(forcing: Forcing) -> ToyConfig {
        ToyConfig::new(forcing, 1.0, 1e-4).unwrap()
    }

    #[test]
    fn free_growth_closed_form() {
        let tr = integrate(&cfg(Forcing::half()), SwitchPolicy::new(false, false));
        let exact = ((2.0f64).exp() - 1.0) / 4.0;
        assert!((tr.u.last().unwrap() - exact).abs() < 1e-8);
        assert!((tr.v.last().unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn one_switch_closed_form() {
        let tr = integrate(&cfg(Forcing::half()), SwitchPolicy::new(true, false));
        assert!((tr.u.last().unwrap() + 0.5).abs() < 1e-8);
        assert!((tr.v.last().unwrap() - 0.5).abs() < 1e-8);
        let tr = integrate(&cfg(Forcing::Linear), SwitchPolicy::new(true, false));
        assert!((tr.u.last().unwrap() + 1.0).abs() < 1e-8);
        assert!(tr.v.last().unwrap().abs() < 1e-8);
    }

    #[test]
    fn linear_both_switch_closed_form() {
        let tr = integrate(&cfg(Forcing::Linear), SwitchPolicy::new(true, true));
        let exact = -(2.0f64).exp() / 4.0 - 0.5 + 0.25;
        assert!((tr.u.last().unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn constant_forcing_forces_both_switches() {
        let t = enumerate(&cfg(Forcing::half()));
        assert_eq!(t.feasible_policies(), vec![SwitchPolicy::new(true, true)]);
        assert_eq!(t.verdict, Verdict::Unique);
        let v = t
            .row(SwitchPolicy::new(false, false))
            .feasibility
            .violation
            .unwrap();
        assert_eq!(v.component, Component::U);
    }

    #[test]
    fn linear_forcing_is_not_unique() {
        let t = enumerate(&cfg(Forcing::Linear));
        assert!(!t.row(SwitchPolicy::new(false, false)).feasibility.feasible);
        assert!(t.row(SwitchPolicy::new(true, false)).feasibility.feasible);
        assert!(t.row(SwitchPolicy::new(false, true)).feasibility.feasible);
        assert_eq!(t.verdict, Verdict::NonUnique);
        assert!(t.render().contains("NonUnique"));
    }

    #[test]
    fn bad_config_rejected() {
        assert!(ToyConfig::new(Forcing::Linear, 0.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn swap_symmetry(value in -2.0f64..2.0, linear in any::<bool>(), pu in any::<bool>(), pv in any::<bool>()) {
            let f = if linear { Forcing::Linear } else { Forcing::Constant { value } };
            let c = ToyConfig::new(f, 1.0, 1e-3).unwrap();
            let p = SwitchPolicy::new(pu, pv);
            let a = integrate(&c, p);
            let b = integrate(&c, p.swapped());
            prop_assert_eq!(&a.u, &b.v);
            prop_assert_eq!(&a.v, &b.u);
        }

        #[test]
        fn sum_matches_scalar_ode(value in -2.0f64..2.0, pu in any::<bool>(), pv in any::<bool>()) {
            let c = ToyConfig::new(Forcing::Constant { value }, 1.0, 1e-3).unwrap();
            let p = SwitchPolicy::new(pu, pv);
            let tr = integrate(&c, p);
            let s = integrate_sum(&c, p);
            for n in 0..s.len() {
                prop_assert!((tr.u[n] + tr.v[n] - s[n]).abs() < 1e-10);
            }
        }
    }
}
