use thiserror::Error;

use crate::system::State;

pub type Result<T, E = HillError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HillError {
    /// Scenario or argument rejected; `path` is the offending key path when known.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A point was used where the JM geometry is undefined (f below the tolerance window).
    #[error("domain violation: {message} (f = {f:e})")]
    Domain { message: String, f: f64 },

    #[error("integration failure at t = {t}: {message}")]
    IntegrationFailure {
        t: f64,
        message: String,
        last_state: Box<State>,
    },

    #[error("chart error: {message}")]
    Chart { message: String },

    #[error("degenerate singularity: sigma ratio {sigma_ratio:e} below rank tolerance")]
    DegenerateSingularity { sigma_ratio: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HillError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        HillError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn chart(message: impl Into<String>) -> Self {
        HillError::Chart {
            message: message.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(HillError::DimensionMismatch { expected, got });
    }
    Ok(())
}
