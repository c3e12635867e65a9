use thiserror::Error;

/// Errors shared across the solver, noise, and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}) lies outside the unit square")]
    OutOfDomain { x: f64, y: f64 },

    #[error("meshes are not nested: coarse n = {coarse}, fine n = {fine}")]
    NonNested { coarse: usize, fine: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
