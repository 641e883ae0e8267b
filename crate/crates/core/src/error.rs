use std::path::PathBuf;

use thiserror::Error;

use crate::model::ViewIndex;

pub type Result<T> = std::result::Result<T, HlfError>;

#[derive(Debug, Error)]
pub enum HlfError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("missing cell {0}")]
    MissingCell(ViewIndex),

    #[error("duplicate cell {0}")]
    DuplicateCell(ViewIndex),

    #[error("cell {cell}: {message}")]
    InvalidCell { cell: ViewIndex, message: String },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("band {0} nm outside [400, 710]")]
    BandOutOfRange(f64),

    #[error("malformed disparity file {path}: {message}")]
    DisparityFormat { path: PathBuf, message: String },

    #[error("camera response: {0}")]
    CameraResponse(String),

    #[error("degenerate image")]
    DegenerateImage,

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("empty window")]
    EmptyWindow,

    #[error("empty disparity range [{0}, {1}]")]
    EmptyRange(f64, f64),

    #[error("no valid overlap between maps")]
    NoValidOverlap,

    #[error("unrefinable view: no valid disparity source")]
    Unrefinable,

    #[error("missing layer: view {view}, band {band}")]
    MissingLayer { view: ViewIndex, band: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl HlfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HlfError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        HlfError::Image {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            HlfError::Io { .. } => "io",
            HlfError::Image { .. } => "image",
            HlfError::Manifest { .. } => "manifest",
            HlfError::MissingCell(_) => "missing_cell",
            HlfError::DuplicateCell(_) => "duplicate_cell",
            HlfError::InvalidCell { .. } => "invalid_cell",
            HlfError::DimensionMismatch { .. } => "dimension_mismatch",
            HlfError::BandOutOfRange(_) => "band_out_of_range",
            HlfError::DisparityFormat { .. } => "disparity_format",
            HlfError::CameraResponse(_) => "camera_response",
            HlfError::DegenerateImage => "degenerate_image",
            HlfError::ImageTooSmall { .. } => "image_too_small",
            HlfError::SizeMismatch(..) => "size_mismatch",
            HlfError::EmptyWindow => "empty_window",
            HlfError::EmptyRange(..) => "empty_range",
            HlfError::NoValidOverlap => "no_valid_overlap",
            HlfError::Unrefinable => "unrefinable",
            HlfError::MissingLayer { .. } => "missing_layer",
            HlfError::InvalidParameter(_) => "invalid_parameter",
        }
    }
}
