//! Closed-form profiles of the precipitation-free problem and the derived
//! constants of the model.
//!
//! Without the sink term the problem is solved by the self-similar profile
//! `psi(x, t) = Psi(x / sqrt(t))` with
//!
//! ```text
//! Psi(eta) = (alpha beta sqrt(pi) / 2) e^{alpha^2/4} erfc(max(eta, alpha) / 2)
//! ```
//!
//! which is constant inside the parabola `x = alpha sqrt(t)` swept by the point
//! source and decays like a Gaussian tail outside of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Complementary error function. Backed by the `libm` port of the musl
/// implementation (max error below 1 ulp over the real line).
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Physical parameters: source speed, source strength and supersaturation
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub u_star: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, u_star: f64) -> Result<Self> {
        let params = Self {
            alpha,
            beta,
            u_star,
        };
        params.validate()?;
        Ok(params)
    }

    /// Threshold given as a fraction of `Psi(alpha)`.
    pub fn with_threshold_fraction(alpha: f64, beta: f64, fraction: f64) -> Result<Self> {
        let psi_alpha = plateau(alpha, beta);
        Self::new(alpha, beta, fraction * psi_alpha)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            problems.push(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            ));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            problems.push(format!(
                "beta must be positive and finite, got {}",
                self.beta
            ));
        }
        // u* = +inf is accepted as the "no precipitation" sentinel.
        if !(self.u_star > 0.0) {
            problems.push(format!("u_star must be positive, got {}", self.u_star));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// `Psi(alpha)`, the concentration on and inside the source parabola.
    pub fn psi_alpha(&self) -> f64 {
        plateau(self.alpha, self.beta)
    }

    pub fn is_supercritical(&self) -> bool {
        self.u_star < self.psi_alpha()
    }

    /// Prefactor `(alpha beta sqrt(pi) / 2) e^{alpha^2/4}` of `Psi`.
    fn amplitude(&self) -> f64 {
        0.5 * self.alpha * self.beta * SQRT_PI * (0.25 * self.alpha * self.alpha).exp()
    }
}

fn plateau(alpha: f64, beta: f64) -> f64 {
    0.5 * alpha * beta * SQRT_PI * (0.25 * alpha * alpha).exp() * erfc(0.5 * alpha)
}

/// Self-similar profile `Psi(eta)`. Continuous and non-increasing.
pub fn capital_psi(eta: f64, params: &ModelParams) -> f64 {
    params.amplitude() * erfc(0.5 * eta.max(params.alpha))
}

/// Precipitation-free solution `psi(x, t)`, extended evenly to `x < 0`.
///
/// At `t = 0` it vanishes for `x != 0`; the corner `(0, 0)` takes the value
/// `Psi(alpha)`, the limit along any path inside the parabola.
pub fn psi(x: f64, t: f64, params: &ModelParams) -> f64 {
    if t > 0.0 {
        capital_psi(x.abs() / t.sqrt(), params)
    } else if x == 0.0 {
        params.psi_alpha()
    } else {
        0.0
    }
}

/// Spatial derivative of `psi`. Zero inside the parabola; the one-sided
/// value from outside is returned on the parabola itself.
pub fn psi_x(x: f64, t: f64, params: &ModelParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let sqrt_t = t.sqrt();
    let eta = x.abs() / sqrt_t;
    if eta < params.alpha {
        return 0.0;
    }
    let a = params.alpha;
    let magnitude = a * params.beta / (2.0 * sqrt_t) * (0.25 * (a * a - eta * eta)).exp();
    -x.signum() * magnitude
}

/// Time derivative of `psi`; zero inside the parabola.
pub fn psi_t(x: f64, t: f64, params: &ModelParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let eta = x.abs() / t.sqrt();
    if eta < params.alpha {
        return 0.0;
    }
    let a = params.alpha;
    a * params.beta / (4.0 * t) * eta * (0.25 * (a * a - eta * eta)).exp()
}

/// Standard heat kernel `(4 pi t)^{-1/2} exp(-x^2 / 4t)`, zero for `t <= 0`.
pub fn heat_kernel(x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (-x * x / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt()
}

/// `int_0^h Phi(z, tau) dtau`, the heat kernel integrated over its first `h`
/// units of elapsed time:
/// `sqrt(h/pi) exp(-z^2/4h) - (|z|/2) erfc(|z| / (2 sqrt h))`.
pub fn heat_kernel_time_integral(z: f64, h: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let z = z.abs();
    let sqrt_h = h.sqrt();
    sqrt_h / SQRT_PI * (-z * z / (4.0 * h)).exp() - 0.5 * z * erfc(z / (2.0 * sqrt_h))
}

/// `sup_z z exp(-z^2/4)`, attained at `z = sqrt(2)`.
pub const GAUSSIAN_MOMENT_SUP: f64 = std::f64::consts::SQRT_2 * 0.606_530_659_712_633_4;

const ROOT_BRACKET_WIDTH: f64 = 50.0;
const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

/// Solves `Psi(eta) = u*` for `eta > alpha` by bisection on `(alpha, alpha + 50)`.
pub fn solve_alpha_star(params: &ModelParams) -> Result<f64> {
    if !params.is_supercritical() {
        return Err(Error::NotSupercritical {
            u_star: params.u_star,
            psi_alpha: params.psi_alpha(),
        });
    }
    let f = |eta: f64| capital_psi(eta, params) - params.u_star;
    let mut lo = params.alpha;
    let mut hi = params.alpha + ROOT_BRACKET_WIDTH;
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::RootNotBracketed { lo, hi });
    }
    for _ in 0..ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= ROOT_TOL {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `t*` with `u* = Psi(alpha) - Psi(alpha) t*`. Non-positive unless supercritical.
pub fn threshold_time(params: &ModelParams) -> f64 {
    let pa = params.psi_alpha();
    (pa - params.u_star) / pa
}

/// Every constant the uniqueness analysis depends on.
///
/// Field names serialize to the flat keys of the constants file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub psi_alpha: f64,
    pub alpha_star: f64,
    pub t_star: f64,
    /// First-ring width lower bound `alpha sqrt(t*)`.
    #[serde(rename = "L")]
    pub ring_width: f64,
    #[serde(rename = "C_psi")]
    pub c_psi_upper: f64,
    #[serde(rename = "c_psi")]
    pub c_psi_lower: f64,
    #[serde(rename = "C_ell")]
    pub c_ell: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    #[serde(rename = "T_unique")]
    pub t_unique: f64,
}

impl ModelConstants {
    /// Computes all constants. `t1` is the measured horizon of the negative
    /// spatial-gradient bound (see [`crate::solver::measure_t1`]); when absent
    /// it defaults to the ceiling `(L / alpha*)^2`, so that `T2 = (L/alpha*)^2`.
    pub fn compute(params: &ModelParams, t1: Option<f64>) -> Result<Self> {
        params.validate()?;
        let alpha = params.alpha;
        let beta = params.beta;
        let psi_alpha = params.psi_alpha();
        let alpha_star = solve_alpha_star(params)?;
        let t_star = threshold_time(params);
        let ring_width = alpha * t_star.sqrt();

        let growth = (0.25 * alpha * alpha).exp();
        let c_psi_upper = 0.25 * alpha * beta * growth * GAUSSIAN_MOMENT_SUP;
        // y exp(-y^2/4) is unimodal, so its minimum on [alpha, alpha*] sits at an end.
        let moment = |y: f64| y * (-0.25 * y * y).exp();
        let c_psi_lower = 0.25 * alpha * beta * growth * moment(alpha).min(moment(alpha_star));
        let c_ell = alpha * beta / (8.0 * alpha_star * c_psi_upper)
            * (0.25 * (alpha * alpha - alpha_star * alpha_star)).exp();

        let ceiling = (ring_width / alpha_star).powi(2);
        let t1 = t1.unwrap_or(ceiling);
        let t2 = ceiling.min(t1);
        let rate_gap = alpha_star * c_psi_upper * SQRT_PI
            + 0.5 * params.u_star * (std::f64::consts::PI / c_ell).sqrt();
        let t_unique = t2.min(c_psi_lower / rate_gap);

        Ok(Self {
            psi_alpha,
            alpha_star,
            t_star,
            ring_width,
            c_psi_upper,
            c_psi_lower,
            c_ell,
            t1,
            t2,
            t_unique,
        })
    }

    /// `sqrt((Psi(alpha) - u*) / Psi(alpha))`, the ring width without the
    /// factor `alpha` carried by [`Self::ring_width`].
    pub fn ring_width_sqrt_t_star(&self) -> f64 {
        self.t_star.sqrt()
    }

    /// `(L / alpha*)^2`, the latest time at which the first ring is certain
    /// to contain the whole essential domain.
    pub fn t2_ceiling(&self) -> f64 {
        (self.ring_width / self.alpha_star).powi(2)
    }

    /// Bound `sqrt(pi) alpha* C_psi` on the first Duhamel integral.
    pub fn f1_bound(&self) -> f64 {
        SQRT_PI * self.alpha_star * self.c_psi_upper
    }

    /// Bound `(1/2) sqrt(pi / C_ell)` on the second Duhamel integral for `t <= T2`.
    pub fn f2_bound(&self) -> f64 {
        0.5 * (std::f64::consts::PI / self.c_ell).sqrt()
    }

    /// Gradient bound `-(alpha beta / (4 sqrt t)) e^{(alpha^2 - alpha*^2)/4}`
    /// defining `T1`.
    pub fn gradient_bound(&self, params: &ModelParams, t: f64) -> f64 {
        let a = params.alpha;
        -a * params.beta / (4.0 * t.sqrt())
            * (0.25 * (a * a - self.alpha_star * self.alpha_star)).exp()
    }
}
