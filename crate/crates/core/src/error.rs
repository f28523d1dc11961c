use std::path::PathBuf;

/// Errors raised by the denoising library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image dimensions {height}x{width}")]
    InvalidDimensions { height: usize, width: usize },

    #[error("pixel buffer has {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },

    #[error("non-finite pixel value at index {index}")]
    NonFinitePixel { index: usize },

    #[error("dimension mismatch: {left_h}x{left_w} vs {right_h}x{right_w}")]
    DimensionMismatch {
        left_h: usize,
        left_w: usize,
        right_h: usize,
        right_w: usize,
    },

    #[error("image {height}x{width} is smaller than the {patch_side}x{patch_side} patch")]
    ImageTooSmall {
        height: usize,
        width: usize,
        patch_side: usize,
    },

    #[error("invalid patch geometry: {0}")]
    InvalidGeometry(String),

    #[error("search window holds {available} candidate patches, group needs {needed}")]
    NotEnoughCandidates { available: usize, needed: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero aggregation weight at pixel ({row}, {col})")]
    UncoveredPixel { row: usize, col: usize },

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("enumeration over {entries} mask entries exceeds the limit of {limit}")]
    InstanceTooLarge { entries: usize, limit: usize },

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the filesystem or file contents.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Read { .. }
                | Error::Write { .. }
                | Error::UnsupportedFormat { .. }
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
