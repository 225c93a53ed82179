use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("layer {layer}: {reason}")]
    Composition { layer: usize, reason: String },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("training diverged{}: {detail}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Diverged { epoch: Option<usize>, detail: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("model file format error: {0}")]
    Format(String),

    #[error("model file truncated: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// The innermost error under any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn diverged(detail: impl Into<String>) -> Self {
        Error::Diverged {
            epoch: None,
            detail: detail.into(),
        }
    }

    /// Attaches an epoch index to a divergence error; other errors pass through.
    pub(crate) fn at_epoch(self, epoch: usize) -> Self {
        match self {
            Error::Diverged { detail, .. } => Error::Diverged {
                epoch: Some(epoch),
                detail,
            },
            other => other,
        }
    }
}
