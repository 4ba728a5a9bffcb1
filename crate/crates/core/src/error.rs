use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("negative score {value} at pixel {pixel}, channel {channel}")]
    NegativeScore { pixel: usize, channel: usize, value: f32 },
    #[error("scores at pixel {pixel} sum to {sum}, expected 1")]
    NotNormalized { pixel: usize, sum: f64 },

    #[error("bad magic: expected {expected}")]
    BadMagic { expected: &'static str },
    #[error("truncated file")]
    TruncatedFile,
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("mask value {value} at pixel {pixel} is neither 0 nor 255")]
    NonBinaryMask { pixel: usize, value: u8 },
    #[error("label {label} at pixel {pixel} is outside the label set of size {label_count}")]
    LabelOutOfRange { pixel: usize, label: u8, label_count: usize },
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("manifest schema error: {0}")]
    SchemaError(String),
    #[error("shot {shot_id} of video {video_id} has no frames")]
    EmptyShot { video_id: String, shot_id: String },
    #[error("unknown label: {0}")]
    UnknownLabel(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("no foreground samples")]
    EmptyForeground,
    #[error("no background samples")]
    EmptyBackground,

    #[error("label {0} is not allowed by the energy model")]
    LabelNotAllowed(u8),
    #[error("binary minimization needs exactly 2 labels, model has {0}")]
    WrongLabelCount(usize),
    #[error("hard assignment needs exactly one weak label, got {0}")]
    MultiLabelVideo(usize),

    #[error("zero sample count for label {0}")]
    ZeroCount(u8),
    #[error("range of {len} frames is shorter than the {needed} requested samples")]
    RangeTooShort { len: usize, needed: usize },

    #[error("no class with nonzero union")]
    NoClasses,
    #[error("empty list")]
    EmptyList,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidValue(_) => "InvalidValue",
            Error::NegativeScore { .. } => "NegativeScore",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::BadMagic { .. } => "BadMagic",
            Error::TruncatedFile => "TruncatedFile",
            Error::BadDimensions(_) => "BadDimensions",
            Error::NonBinaryMask { .. } => "NonBinaryMask",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::SizeMismatch { .. } => "SizeMismatch",
            Error::SchemaError(_) => "SchemaError",
            Error::EmptyShot { .. } => "EmptyShot",
            Error::UnknownLabel(_) => "UnknownLabel",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::EmptyForeground => "EmptyForeground",
            Error::EmptyBackground => "EmptyBackground",
            Error::LabelNotAllowed(_) => "LabelNotAllowed",
            Error::WrongLabelCount(_) => "WrongLabelCount",
            Error::MultiLabelVideo(_) => "MultiLabelVideo",
            Error::ZeroCount(_) => "ZeroCount",
            Error::RangeTooShort { .. } => "RangeTooShort",
            Error::NoClasses => "NoClasses",
            Error::EmptyList => "EmptyList",
            Error::Io { .. } => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
