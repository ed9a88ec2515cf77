use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum SegcalError {
    #[error("temperature must be > 0, got {0}")]
    NonPositiveTemperature(f64),
    #[error("input contains a NaN or infinite value at index {0}")]
    NonFiniteInput(usize),
    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: &'static str,
        left: String,
        right: String,
    },
    #[error("input lists have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("image {0} has no non-ignored pixels")]
    AllPixelsIgnored(u32),
    #[error("dataset contains no images")]
    EmptyDataset,
    #[error("invalid bounds: lo {0} must be < hi {1}")]
    InvalidBounds(f64, f64),
    #[error("non-finite gradient at optimization step {step}")]
    NonFiniteGradient { step: usize },
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("required split is empty: {0}")]
    SplitMissing(&'static str),
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("ensemble members have mismatched shapes")]
    ShapeMismatch,
    #[error("class count mismatch: params expect K={expected}, data has K={found}")]
    ClassCountMismatch { expected: usize, found: usize },
    #[error("calibrator params not directly applicable: {0}")]
    InvalidParams(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u16, num_classes: usize },
    #[error("bad magic bytes (expected \"SGCL\")")]
    BadMagic,
    #[error("unsupported container version {0}")]
    VersionUnsupported(u32),
    #[error("truncated payload at byte offset {offset}")]
    TruncatedPayload { offset: u64 },
    #[error("{extra} trailing bytes after declared payload")]
    TrailingBytes { extra: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SegcalError>;
