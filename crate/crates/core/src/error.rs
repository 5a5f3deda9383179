use thiserror::Error;

/// Errors produced by the model, solver, and analysis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("steady state is not unique: null space has dimension {nullity} at tolerance {tolerance:e}")]
    DegenerateSteadyState { nullity: usize, tolerance: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("density matrix has eigenvalue {0:e} below the positivity floor")]
    NotPositive(f64),

    #[error("no resonance feature: deviation {deviation:e} relative to baseline {baseline:e}")]
    NoResonance { deviation: f64, baseline: f64 },

    #[error("resonance half-maximum crossing falls outside the detuning grid")]
    TruncatedPeak,

    #[error("contrast is zero")]
    ZeroContrast,

    #[error(
        "self-consistent cavity loop did not converge after {iterations} iterations (relative residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("at detuning {detuning_hz} Hz: {source}")]
    AtDetuning {
        detuning_hz: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Strips any detuning context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtDetuning { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}

pub(crate) fn ensure_positive(name: &'static str, v: f64) -> Result<()> {
    ensure_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {v}")))
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, v: f64) -> Result<()> {
    ensure_finite(name, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be >= 0, got {v}")))
    }
}
