//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not conform for an operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Gather/scatter index outside the valid row range.
    #[error("index out of range in {op}: {detail}")]
    Index { op: &'static str, detail: String },

    /// backward() requires a scalar loss node.
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    /// A tape node id that does not exist on this tape.
    #[error("unknown tape node {node}")]
    UnknownNode { node: usize },

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("training diverged (non-finite loss) at step {step}")]
    Divergence { step: usize },

    /// A subnet mask selects a module outside its sub-supernet's allowed set.
    #[error("mask selects module {module} at layer {layer} outside the allowed set")]
    Containment { layer: usize, module: usize },

    /// Dataset / checkpoint file format version does not match.
    #[error("format version mismatch: file has {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },

    /// Dataset file ended or corrupted inside record `index`.
    #[error("corrupt or truncated record {index}: {detail}")]
    CorruptRecord { index: usize, detail: String },

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
