use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An id was not present in the catalog the matrix is built against.
    UnknownId { kind: &'static str, id: String },
    /// Index outside the model or matrix shape.
    IndexOutOfRange { kind: &'static str, index: usize, len: usize },
    /// Two structures that must agree in shape do not.
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    /// A factor entry fell to zero or below, which the log terms cannot take.
    NonPositiveFactor { matrix: &'static str, row: usize, factor: usize },
    /// The objective became NaN or infinite during training.
    Diverged { epoch: usize },
    /// The log-log fit has fewer than two distinct distance buckets.
    DegenerateFit { buckets: usize },
    /// Caller-supplied parameter outside its domain.
    InvalidParameter { name: &'static str, reason: String },
    /// Input was empty where at least one element is required.
    Empty(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UnknownId { kind, id } => write!(f, "{kind} id {id:?} is not in the catalog"),
            Error::IndexOutOfRange { kind, index, len } => {
                write!(f, "{kind} index {index} out of range (len {len})")
            }
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NonPositiveFactor { matrix, row, factor } => write!(
                f,
                "non-positive entry in {matrix} factors at row {row}, factor {factor}"
            ),
            Error::Diverged { epoch } => write!(f, "objective became non-finite at epoch {epoch}"),
            Error::DegenerateFit { buckets } => write!(
                f,
                "power-law fit needs at least two distinct distance buckets, got {buckets}"
            ),
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::Empty(what) => write!(f, "{what} is empty"),
        }
    }
}

impl core::error::Error for Error {}
