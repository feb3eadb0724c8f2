use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an input contract (e.g. passed a non-normalized state).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("perturbative van der Waals shift is singular at zero Förster defect; use the exact mode")]
    Singularity,

    #[error("no sign change of the Förster defect on [0, {upper}] mV/cm")]
    ResonanceNotFound { upper: f64 },

    /// An operation was asked to work outside the physical regime it describes.
    #[error("regime error: {0}")]
    Regime(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("no oscillation found: the dominant Fourier component is at zero frequency")]
    NoOscillation,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Whether the error stems from user input rather than a failure during a run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Contract(_) | Error::Regime(_) | Error::Config { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
