use thiserror::Error;

/// Errors raised by the library. Every variant carries a one-line reason.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid regularity: {0}")]
    InvalidRegularity(String),
    #[error("grid too coarse: cell {cell} has W^(gamma-eta) = {value} > chi = {chi}")]
    GridTooCoarse { cell: usize, value: f64, chi: f64 },
    #[error("non-finite state at t = {time}: {msg}")]
    BlowUp { time: f64, msg: String },
    #[error("series not converging: {0}")]
    NonConvergence(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for numerical diagnostics (as opposed to input/config problems).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. } | Error::NonConvergence(_) | Error::Range(_) | Error::GridTooCoarse { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
