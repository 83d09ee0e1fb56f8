//! Error type shared by the core modules.

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two buffers that must agree in shape do not.
    ShapeMismatch { context: &'static str, expected: String, got: String },
    /// Class counts of two label maps or models disagree.
    ClassMismatch { expected: usize, got: usize },
    /// A configuration value is out of its legal range.
    InvalidConfig(String),
    /// Every class had an empty union; no IoU is defined.
    EmptyEvaluation,
    /// A step index fell outside the training schedule.
    StepOutOfRange { step: usize, total: usize },
    /// A dataset violated its contract (missing labels, bad class ids, ...).
    InvalidDataset(String),
    /// A training sampler was pointed at data reserved for evaluation.
    DataLeakage(String),
    /// A loss term stopped being finite; carries a diagnostic dump.
    NonFinite { term: &'static str, detail: String },
    /// Checkpoint or parameter-store contents do not match the model.
    ParamMismatch(String),
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::ShapeMismatch { context, expected, got } => {
                write!(f, "shape mismatch in {context}: expected {expected}, got {got}")
            }
            Error::ClassMismatch { expected, got } => {
                write!(f, "class count mismatch: expected {expected}, got {got}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::EmptyEvaluation => write!(f, "empty evaluation: no class has a defined IoU"),
            Error::StepOutOfRange { step, total } => {
                write!(f, "step {step} outside schedule of {total} iterations")
            }
            Error::InvalidDataset(msg) => write!(f, "invalid dataset: {msg}"),
            Error::DataLeakage(msg) => write!(f, "data leakage: {msg}"),
            Error::NonFinite { term, detail } => {
                write!(f, "non-finite loss term `{term}`: {detail}")
            }
            Error::ParamMismatch(msg) => write!(f, "parameter mismatch: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
