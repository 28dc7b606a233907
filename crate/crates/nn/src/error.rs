use crate::tensor::Shape;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("tensor of shape {shape} needs {} values, got {len}", shape.numel())]
    DataLength { shape: Shape, len: usize },
    #[error("{op}: invalid geometry ({detail})")]
    Geometry { op: &'static str, detail: String },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
}

pub(crate) fn mismatch(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
