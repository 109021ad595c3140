use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Error, Debug)]
pub enum LpfError {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),

    #[error("all points coincide; nearest-neighbor spacing is zero")]
    DegenerateSpacing,

    #[error("target area is empty")]
    EmptyTarget,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dictionary size {atoms} exceeds number of signals {signals}")]
    TooManyAtoms { atoms: usize, signals: usize },

    #[error("unknown shape kind `{0}`")]
    UnknownShape(String),

    #[error("no valid local probing field could be built")]
    NoFields,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("snapshot version mismatch: file has version {found}, reader supports version {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("not an analysis snapshot (bad magic bytes)")]
    BadMagic,

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LpfError>;
