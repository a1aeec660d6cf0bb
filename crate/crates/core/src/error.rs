use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", path.display())]
    FileNotFound { path: PathBuf },

    #[error("unsupported format: {}: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("corrupt data: {}: {reason}", path.display())]
    CorruptData { path: PathBuf, reason: String },

    #[error("i/o error: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero-sized output: {0}")]
    ZeroSizedOutput(String),

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("border too large: border {border} for {height}x{width} image")]
    BorderTooLarge {
        border: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stencil bank parse error at line {line}: {reason}")]
    BankParse { line: usize, reason: String },

    #[error("stencil bank validation error: {0}")]
    BankValidation(String),

    #[error("footprint mismatch: patch is {got_h}x{got_w}, bank footprint is {want}x{want}")]
    FootprintMismatch {
        got_h: usize,
        got_w: usize,
        want: usize,
    },

    #[error("bank version mismatch: {0} vs {1}")]
    BankVersionMismatch(String, String),

    #[error("center out of bounds: ({row}, {col})")]
    CenterOutOfBounds { row: usize, col: usize },

    #[error("invalid sigma {0}: must exceed 1")]
    InvalidSigma(f64),

    #[error("empty list")]
    EmptyList,

    #[error("non-positive entry {value} at index {index}")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("crop size mismatch: {0}")]
    CropSizeMismatch(String),

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("model version mismatch: found {0:?}")]
    VersionMismatch(String),

    #[error("empty directory: {}", .0.display())]
    EmptyDirectory(PathBuf),

    #[error("model missing: refine stage requires a model path")]
    ModelMissing,

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable kebab-case identifier of the variant; stage wrappers report
    /// the kind of the underlying error.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::FileNotFound { .. } => "file-not-found",
            Error::UnsupportedFormat { .. } => "unsupported-format",
            Error::CorruptData { .. } => "corrupt-data",
            Error::Io { .. } => "io",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::ZeroSizedOutput(_) => "zero-sized-output",
            Error::ImageTooSmall(_) => "image-too-small",
            Error::BorderTooLarge { .. } => "border-too-large",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::BankParse { .. } => "bank-parse",
            Error::BankValidation(_) => "bank-validation",
            Error::FootprintMismatch { .. } => "footprint-mismatch",
            Error::BankVersionMismatch(..) => "bank-version-mismatch",
            Error::CenterOutOfBounds { .. } => "center-out-of-bounds",
            Error::InvalidSigma(_) => "invalid-sigma",
            Error::EmptyList => "empty-list",
            Error::NonPositiveEntry { .. } => "non-positive-entry",
            Error::EmptyCandidates => "empty-candidates",
            Error::InvalidArch(_) => "invalid-arch",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::EmptyDataset => "empty-dataset",
            Error::CropSizeMismatch(_) => "crop-size-mismatch",
            Error::CorruptModel(_) => "corrupt-model",
            Error::VersionMismatch(_) => "version-mismatch",
            Error::EmptyDirectory(_) => "empty-directory",
            Error::ModelMissing => "model-missing",
            Error::Config { .. } => "config",
            Error::Stage { source, .. } => source.kind(),
        }
    }

    /// Name of the innermost pipeline stage that failed, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
