use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("exact moment accumulator overflowed (p = {p})")]
    ArithmeticCapacity { p: u32 },

    #[error("protocol did not terminate within {limit} rounds")]
    Divergence { limit: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("malformed stream record at line {line}: {reason}")]
    StreamFormat { line: usize, reason: String },

    #[error("io: {message}")]
    Io { kind: std::io::ErrorKind, message: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("eps must lie in (0, 1), got {eps}")))
    }
}

pub(crate) fn check_p(p: u32, min: u32) -> Result<()> {
    if p >= min {
        Ok(())
    } else {
        Err(Error::Parameter(format!("p must be >= {min}, got {p}")))
    }
}
