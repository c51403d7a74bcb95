use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("threshold u* = {u_star} is not supercritical (Psi(alpha) = {psi_alpha})")]
    NotSupercritical { u_star: f64, psi_alpha: f64 },

    #[error("root of Psi(eta) = u* not bracketed on ({lo}, {hi})")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("field length {got} does not match state length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at node {node} (t = {t})")]
    NonFiniteField { node: usize, t: f64 },

    #[error("no node ignited in the record")]
    EmptyFront,

    #[error("not enough snapshots to evaluate at t = {t}")]
    InsufficientSnapshots { t: f64 },

    #[error("probe (x = {x}, t = {t}) lies on the precipitation front")]
    ProbeOnFront { x: f64, t: f64 },

    #[error("temporal transversality fails at x = {x}; front slope undefined")]
    DegenerateRate { x: f64 },

    #[error("records live on different grids: {0}")]
    GridMismatch(String),

    #[error("parse error at line {line}{}: {message}", key.as_ref().map(|k| format!(", key `{k}`")).unwrap_or_default())]
    Parse {
        line: usize,
        key: Option<String>,
        message: String,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation problems map to exit status 1, numerical failures to 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RootNotBracketed { .. }
                | Error::NonFiniteField { .. }
                | Error::EmptyFront
                | Error::InsufficientSnapshots { .. }
                | Error::DegenerateRate { .. }
        )
    }
}
