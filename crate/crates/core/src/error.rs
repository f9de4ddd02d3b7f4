use thiserror::Error;

/// Errors raised across the solver, diagnostics and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected {expected} values for the grid, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("field is not Hermitian-symmetric (relative defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("cutoff {m} outside 1..={max}")]
    CutoffOutOfRange { m: usize, max: usize },

    #[error("invalid velocity field: {0}")]
    InvalidVelocity(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("integration failure: non-finite coefficient at t = {t}")]
    NonFinite { t: f64 },

    #[error("time step {dt:e} exceeds the stability estimate {limit:e}")]
    UnstableStep { dt: f64, limit: f64 },

    #[error("energy reports are not uniformly spaced in time")]
    NonUniformSpacing,

    #[error("need at least {needed} levels, got {got}")]
    InsufficientLevels { needed: usize, got: usize },

    #[error("perturbation size must be positive")]
    ZeroPerturbation,

    #[error("config line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },

    #[error("unknown configuration key `{key}` (line {line})")]
    UnknownKey { key: String, line: usize },

    #[error("invalid configuration value: {0}")]
    ConfigValue(String),

    #[error("override `{arg}`: {msg}")]
    Override { arg: String, msg: String },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("snapshot checksum mismatch")]
    Checksum,

    #[error("snapshot format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_param(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.to_string(),
        reason: reason.into(),
    }
}
