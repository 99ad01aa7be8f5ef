use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vector norm is zero (or below 1e-30)")]
    ZeroNorm,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("cosine scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("invalid margin configuration: {0}")]
    InvalidMargin(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need {need} classes per batch but the dataset has {have}")]
    TooFewClasses { have: usize, need: usize },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("forward cache does not belong to the current model parameters")]
    StaleCache,
    #[error("epoch {epoch} out of range for a {epochs}-epoch schedule")]
    OutOfRange { epoch: usize, epochs: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("configuration conflict: {0}")]
    ConfigConflict(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("degenerate set: {0}")]
    DegenerateSet(String),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
