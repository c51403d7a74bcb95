//! Spatially distributed one-sided relay.
//!
//! Each node carries the accumulated supersaturation
//! `a(x, t) = int_0^t (u - u*)_+ dtau` and a precipitation value `p = H(a)`
//! (with `H(0) = 0`). The relay only ever switches on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which relay law to apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelayKind {
    /// `p = H(a)` with `H(0) = 0`.
    Sharp,
    /// `p = S(a / epsilon)` with the cubic smoothstep `S`.
    Mollified { epsilon: f64 },
    /// Sharp relay whose accumulator integrates only up to `min(t, x^2/alpha^2)`.
    PropertyP,
}

impl RelayKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RelayKind::Mollified { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                Err(Error::Validation(vec![format!(
                    "mollifier epsilon must be positive, got {epsilon}"
                )]))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            RelayKind::Sharp => "sharp".into(),
            RelayKind::Mollified { epsilon } => format!("mollified({epsilon:e})"),
            RelayKind::PropertyP => "property_p".into(),
        }
    }

    /// Relay law applied to a single accumulator value.
    #[inline]
    pub fn law(&self, a: f64) -> f64 {
        match *self {
            RelayKind::Sharp | RelayKind::PropertyP => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            RelayKind::Mollified { epsilon } => smoothstep(a / epsilon),
        }
    }
}

/// `3s^2 - 2s^3` clamped to `[0, 1]`.
#[inline]
pub fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * (3.0 - 2.0 * s)
    }
}

/// Per-node relay state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayState {
    /// Node positions; needed for the parabola cap of [`RelayKind::PropertyP`].
    pub x: Vec<f64>,
    pub accumulator: Vec<f64>,
    pub p: Vec<f64>,
    /// End of the first step with a strict accumulator increase.
    pub ignition_time: Vec<Option<f64>>,
    /// Time of the last accumulation.
    pub t: f64,
}

impl RelayState {
    pub fn new(x: Vec<f64>) -> Self {
        let n = x.len();
        Self {
            x,
            accumulator: vec![0.0; n],
            p: vec![0.0; n],
            ignition_time: vec![None; n],
            t: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Adds `(u - u*)_+ dt` at every node (left-endpoint rule in the
    /// accumulator, evaluated with the freshly computed `u`), then refreshes
    /// `p`. For `PropertyP` the integration span is cut at `x^2/alpha^2`.
    pub fn accumulate(
        &mut self,
        u: &[f64],
        u_star: f64,
        dt: f64,
        t_new: f64,
        kind: RelayKind,
        alpha: f64,
    ) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        self.accumulate_prefix(u, u_star, dt, t_new, kind, alpha);
        Ok(())
    }

    /// Same as [`Self::accumulate`] but only for the first `u.len()` nodes;
    /// the remaining nodes are taken to be below threshold.
    pub fn accumulate_prefix(
        &mut self,
        u: &[f64],
        u_star: f64,
        dt: f64,
        t_new: f64,
        kind: RelayKind,
        alpha: f64,
    ) {
        debug_assert!(u.len() <= self.len());
        let t_old = t_new - dt;
        let inv_a2 = 1.0 / (alpha * alpha);
        for i in 0..u.len() {
            let excess = u[i] - u_star;
            if !(excess > 0.0) {
                continue;
            }
            let span = match kind {
                RelayKind::PropertyP => {
                    let cap = self.x[i] * self.x[i] * inv_a2;
                    (t_new.min(cap) - t_old).clamp(0.0, dt)
                }
                _ => dt,
            };
            if span <= 0.0 {
                continue;
            }
            let before = self.accumulator[i];
            self.accumulator[i] = before + excess * span;
            if self.accumulator[i] > before && self.ignition_time[i].is_none() {
                self.ignition_time[i] = Some(t_new);
            }
        }
        self.t = t_new;
        self.refresh(kind);
    }

    fn refresh(&mut self, kind: RelayKind) {
        for (p, &a) in self.p.iter_mut().zip(&self.accumulator) {
            // max() keeps p non-decreasing even if a future law is not monotone.
            *p = p.max(kind.law(a));
        }
    }

    /// Precipitation field implied by the current accumulator.
    pub fn evaluate(&self, kind: RelayKind) -> Vec<f64> {
        self.accumulator.iter().map(|&a| kind.law(a)).collect()
    }
}
