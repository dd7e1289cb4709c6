use thiserror::Error;

pub type Result<T, E = AdaptError> = std::result::Result<T, E>;

/// Every failure the adaptation stack can report.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdaptError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("unsupported channel count {0}")]
    UnsupportedChannelCount(usize),
    #[error("wrapper has not been prepared")]
    NotPrepared,
    #[error("run cancelled")]
    Cancelled,
    #[error("bundle format error at byte {offset}: {reason}")]
    BundleFormat { offset: u64, reason: String },
    #[error("parameter domain violation: {0}")]
    ParameterDomain(String),
}

impl AdaptError {
    pub(crate) fn config(reason: impl Into<String>) -> Self {
        Self::InvalidConfig(reason.into())
    }

    pub(crate) fn param(reason: impl Into<String>) -> Self {
        Self::ParameterDomain(reason.into())
    }

    pub(crate) fn bundle(offset: u64, reason: impl Into<String>) -> Self {
        Self::BundleFormat {
            offset,
            reason: reason.into(),
        }
    }
}
