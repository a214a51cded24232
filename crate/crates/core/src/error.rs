use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rotation: quaternion has zero norm")]
    DegenerateRotation,

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite attribute on primitive {index}: {attribute}")]
    NonFinite { index: usize, attribute: &'static str },

    #[error("render intermediates missing; call render() with intermediates before backward")]
    MissingIntermediates,

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("prior provider unavailable: {0}")]
    PriorUnavailable(String),

    #[error("provider timed out after {0:?}")]
    ProviderTimeout(std::time::Duration),

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("missing file {path}")]
    MissingFile { path: PathBuf },

    #[error("version mismatch: {0}")]
    VersionMismatch(String),

    #[error("resolution mismatch in {what}: expected {expected:?}, found {found:?}")]
    ResolutionMismatch {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss in term {term} at iteration {iter}: {detail}")]
    NonFiniteLoss {
        term: &'static str,
        iter: usize,
        detail: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Stable machine-readable code for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DegenerateRotation => "degenerate_rotation",
            Error::NumericalDegeneracy(_) => "numerical_degeneracy",
            Error::Shape(_) => "shape_mismatch",
            Error::NonFinite { .. } => "non_finite_attribute",
            Error::MissingIntermediates => "missing_intermediates",
            Error::DegenerateStatistics(_) => "degenerate_statistics",
            Error::PriorUnavailable(_) => "prior_unavailable",
            Error::ProviderTimeout(_) => "provider_timeout",
            Error::MalformedFrame(_) => "malformed_frame",
            Error::MissingFile { .. } => "missing_file",
            Error::VersionMismatch(_) => "version_mismatch",
            Error::ResolutionMismatch { .. } => "resolution_mismatch",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::InvalidInput(_) => "invalid_input",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }
}
