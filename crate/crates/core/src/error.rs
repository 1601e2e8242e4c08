use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arm length {value} of arm {arm} is outside [{min}, {max}]")]
    ArmOutOfBounds {
        arm: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("time {0} is outside the reference horizon [0, 20] s")]
    TimeOutOfRange(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("weight solver failed: {0}")]
    Solver(String),
    #[error("config: unknown key `{0}`")]
    UnknownKey(String),
    #[error("config: invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },
    #[error("schedule line {line}: {reason}")]
    ScheduleSyntax { line: usize, reason: String },
    #[error("checkpoint: bad magic tag")]
    BadMagic,
    #[error("checkpoint: unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint: truncated file")]
    Truncated,
    #[error("checkpoint: {0}")]
    Corrupt(String),
    /// 1-based mode numbers.
    #[error("missing checkpoints for modes {0:?}")]
    MissingModes(Vec<usize>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable identifier of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ArmOutOfBounds { .. } => "arm-out-of-bounds",
            Error::TimeOutOfRange(_) => "time-out-of-range",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::EpisodeFinished => "episode-finished",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::Solver(_) => "solver",
            Error::UnknownKey(_) => "unknown-key",
            Error::InvalidValue { .. } => "invalid-value",
            Error::ConfigSyntax { .. } => "config-syntax",
            Error::ScheduleSyntax { .. } => "schedule-syntax",
            Error::BadMagic => "bad-magic",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::Truncated => "truncated",
            Error::Corrupt(_) => "corrupt",
            Error::MissingModes(_) => "missing-modes",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
