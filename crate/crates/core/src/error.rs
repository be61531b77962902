use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("time grid too coarse: dt = {dt} exceeds {max}")]
    Resolution { dt: f64, max: f64 },

    #[error("unknown unit conversion `{from}` -> `{to}`")]
    UnknownUnits { from: String, to: String },

    #[error("soft-core calibration failed: {0}")]
    Calibration(String),

    #[error("imaginary-time relaxation did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("numerical instability at step {step}: {reason}")]
    Instability { step: usize, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("quadrature did not converge: node-doubling change {0:e}")]
    Quadrature(f64),

    #[error("variance ratio undefined: reference variance interval [{lo}, {hi}] touches zero")]
    UndefinedRatio { lo: f64, hi: f64 },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be finite, got {value}")))
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be positive and finite, got {value}")))
    }
}
