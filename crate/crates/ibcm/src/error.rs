use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IbcmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point {x} outside domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("singular geometry at ({0}, {1})")]
    SingularGeometry(f64, f64),
    #[error("singular curve at parameter {0}")]
    SingularCurve(f64),
    #[error("cell {cell} needs grid refinement: {reason}")]
    RefineRequired { cell: usize, reason: String },
    #[error("invalid offset curve: {0}")]
    InvalidOffset(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid load: {0}")]
    InvalidLoad(String),
    #[error("segmentation failure: {0}")]
    Segmentation(String),
    #[error("cannot couple strongly: {0}")]
    CannotCoupleStrongly(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("assembly failure in element {0}")]
    Assembly(usize),
    #[error("geometry failure: {0}")]
    Geometry(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for IbcmError {
    fn from(e: std::io::Error) -> Self {
        IbcmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, IbcmError>;
