//! Error type shared by every module.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cluster of center {center} is empty after removing net points")]
    ClusterDegenerate { center: usize },

    #[error("cluster {k} has {found} members, schedule requires {needed}")]
    ClusterUnderfull { k: usize, found: usize, needed: usize },

    #[error("no midpoint candidate between {x} and {y}")]
    MidpointNotFound { x: usize, y: usize },

    #[error("comparator is infinite at ({x}, {z})")]
    RatioUnavailable { x: usize, z: usize },

    #[error("no feasible anchor for {x}")]
    TauNotFound { x: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable name of the variant, used in structured failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::ClusterDegenerate { .. } => "cluster_degenerate",
            Error::ClusterUnderfull { .. } => "cluster_underfull",
            Error::MidpointNotFound { .. } => "midpoint_not_found",
            Error::RatioUnavailable { .. } => "ratio_unavailable",
            Error::TauNotFound { .. } => "tau_not_found",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
