pub mod cfmm;
pub mod cli;
pub mod liquidation;
pub mod noncomposable;
pub mod routing;
pub mod error;

pub use error::{Error, Result};
