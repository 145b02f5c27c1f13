use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite position: {0}")]
    NonFinitePosition(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-neutral plasma: net charge {net_charge:e} exceeds tolerance")]
    NonNeutral { net_charge: f64 },

    #[error("invalid score input at particle {index}")]
    InvalidScore { index: usize },

    #[error("isolated particle in velocity space: particle {index}")]
    IsolatedParticle { index: usize },

    #[error("training divergence: {0}")]
    TrainingDivergence(String),

    #[error("inconsistent energy accounting: T_inf = {t_inf}")]
    InconsistentEnergy { t_inf: f64 },

    #[error("unknown preset: {0}")]
    UnknownPreset(String),

    #[error("insufficient oscillations: found {found} peaks, need at least 3")]
    InsufficientOscillations { found: usize },

    #[error("empty particle set")]
    EmptyParticles,

    #[error("non-finite fields or velocities after step {step}")]
    NonFiniteState { step: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
