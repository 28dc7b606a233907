use std::path::PathBuf;

use matting_nn::NnError;

pub type Result<T, E = MattingError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum MattingError {
    #[error("{context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode or encode image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("model variant mismatch: checkpoint holds `{checkpoint}`, configuration requests `{requested}`")]
    VariantMismatch {
        checkpoint: String,
        requested: String,
    },
    #[error("training diverged at iteration {iteration}: {diagnostic}")]
    Diverged {
        iteration: usize,
        diagnostic: String,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl MattingError {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Self::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    pub(crate) fn image(path: impl Into<PathBuf>) -> impl FnOnce(image::ImageError) -> Self {
        let path = path.into();
        move |source| Self::Image { path, source }
    }

    /// True for failures caused by inputs or configuration rather than by the
    /// model or a runtime condition.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Self::InvalidArgument(_)
                | Self::Io { .. }
                | Self::Image { .. }
                | Self::Format { .. }
                | Self::Config(_)
                | Self::Shape { .. }
        )
    }
}
