use thiserror::Error;

/// Errors raised by the workbench operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid cube: {0}")]
    InvalidCube(String),

    #[error("leaf cube at level {level} has no children")]
    LeafCube { level: u32 },

    #[error("function length {got} does not match grid cell count {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at cell {cell}")]
    NonFiniteValue { cell: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel is non-finite at output cell {x_cell} with input cells {y_cells:?}")]
    NonFiniteKernel { x_cell: usize, y_cells: Vec<usize> },

    #[error("modulus is not Dini: {0}")]
    NotDini(String),

    #[error("empty sample plan")]
    EmptySamplePlan,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("recursion depth cap {cap} exceeded")]
    DepthCapExceeded { cap: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
