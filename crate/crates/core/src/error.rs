use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that disagree with each other or with a [`crate::market::MarketSpec`].
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric argument outside its domain (non-positive weights, bad bounds).
    #[error("domain error: {0}")]
    Domain(String),

    /// An exhaustive oracle refused an instance that exceeds its size bound.
    #[error("size guard: {what} is {actual}, limit is {limit}")]
    Guard {
        what: &'static str,
        actual: u128,
        limit: u128,
    },

    /// Fewer Monte-Carlo samples than a statistic needs.
    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn guard(what: &'static str, actual: u128, limit: u128) -> Self {
        Error::Guard {
            what,
            actual,
            limit,
        }
    }

    /// True for oracle size-guard refusals.
    pub fn is_guard(&self) -> bool {
        matches!(self, Error::Guard { .. })
    }
}
