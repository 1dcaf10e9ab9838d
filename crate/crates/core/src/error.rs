use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("enumeration budget exceeded: {needed} states requested, limit {limit}")]
    Budget { needed: f64, limit: f64 },
    #[error("bracket [{lo}, {hi}] does not straddle the transition")]
    Bracket { lo: f64, hi: f64 },
    #[error(transparent)]
    Scan(#[from] crate::thresholds::ScanFailure),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
