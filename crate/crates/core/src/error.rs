use thiserror::Error;

pub type Result<T> = std::result::Result<T, HsrError>;

#[derive(Debug, Error)]
pub enum HsrError {
    #[error("row {row} has norm <= 1e-12 and cannot be normalized")]
    ZeroVector { row: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("need more than {k} samples, got {n}")]
    TooFewSamples { n: usize, k: usize },

    #[error("fewer than two non-noise clusters")]
    SingleCluster,

    #[error("anchor {0} has no mutual partner")]
    NoPositive(usize),

    #[error("anchor {0} has an empty negative pool")]
    NoNegative(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("batch contains a single class")]
    DegenerateBatch,

    #[error("need {need} clusters, have {have}")]
    TooFewClusters { have: usize, need: usize },

    #[error("query has no relevant gallery entry")]
    NoRelevant,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HsrError {
    /// Errors caused by bad input or configuration rather than a failure of the pipeline.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            HsrError::Config(_)
                | HsrError::Parse { .. }
                | HsrError::UnknownKey { .. }
                | HsrError::Type { .. }
                | HsrError::Dataset(_)
                | HsrError::Format(_)
                | HsrError::Io(_)
                | HsrError::Csv(_)
                | HsrError::TooFewSamples { .. }
        )
    }
}
