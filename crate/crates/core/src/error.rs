use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// MRCA distances need a finite depth to rescale against.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid leaf id {leaf} for tree {tree} ({leaf_count} leaves)")]
    InvalidLeaf {
        tree: usize,
        leaf: u32,
        leaf_count: usize,
    },

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("bench config: {0}")]
    Config(String),

    #[error("model archive version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("corrupt model archive section `{section}`: {reason}")]
    CorruptSection { section: String, reason: String },

    #[error("not a model archive (bad magic bytes)")]
    BadMagic,

    #[error("report: {0}")]
    Report(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
