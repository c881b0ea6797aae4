use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("row {row}: expected {expected} values, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: non-finite value in column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("row {row}: could not parse {value:?} as a number")]
    BadNumber { row: usize, value: String },

    #[error("row {row}: duplicate id {id:?}")]
    DuplicateId { row: usize, id: String },

    #[error("row {row}: empty group label")]
    EmptyLabel { row: usize },

    #[error("binary format: {0}")]
    BadBinary(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("unknown group {0:?}")]
    UnknownGroup(String),

    #[error("group {group:?} has {size} items, need at least {needed}")]
    GroupTooSmall {
        group: String,
        size: usize,
        needed: usize,
    },

    #[error("sample too small: {0}")]
    SampleTooSmall(String),

    #[error("degenerate bandwidth: median pairwise distance is zero")]
    DegenerateBandwidth,

    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),

    #[error("kernel matrix needs {needed_bytes} bytes, budget is {budget_bytes}")]
    GramBudgetExceeded {
        needed_bytes: u64,
        budget_bytes: u64,
    },

    #[error("permutation work {work} exceeds limit {limit}")]
    PermutationBudgetExceeded { work: u64, limit: u64 },

    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("index {0} appears in both samples")]
    OverlappingIndices(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero-norm vector cannot be compared by cosine similarity")]
    ZeroNorm,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
