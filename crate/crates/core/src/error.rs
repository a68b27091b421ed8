use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("trade size {size} is outside the domain of the market (max {max})")]
    Domain { size: f64, max: f64 },

    #[error("no feasible route from asset {input} to asset {output}")]
    NoFeasibleRoute { input: usize, output: usize },

    #[error("brute-force oracle refused: {0}")]
    OracleRefused(String),

    #[error("configuration error: {message}")]
    Config {
        message: String,
        suggested: Option<(f64, f64)>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
