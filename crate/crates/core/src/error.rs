use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },

    #[error("coincident points: |x - y| = {distance:e} is below the kernel guard")]
    CoincidentPoints { distance: f64 },

    #[error("viscosity {value} at ({x}, {y}, {z}) is below the lower bound {bound}")]
    ViscosityBound { value: f64, bound: f64, x: f64, y: f64, z: f64 },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("unsupported target: {0}")]
    UnsupportedTarget(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("unknown manufactured case `{0}`")]
    UnknownCase(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
