//! Crate error type.

use thiserror::Error;

/// Errors raised by scenario construction and the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("enumeration cap exceeded: {0} users (max {1})")]
    EnumerationCap(usize, usize),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
