use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("unsupported FFT extent {0}: only products of 2, 3 and 5 are supported")]
    FftExtent(usize),
    #[error("imaginary residue {residue:.3e} exceeds tolerance {tol:.3e}")]
    ImaginaryResidue { residue: f64, tol: f64 },
    #[error("odd extent {0} cannot be split by the Haar transform")]
    OddExtent(usize),
    #[error("non-finite values produced by {0}")]
    NonFinite(String),
    #[error("backward: {0}")]
    Backward(String),
    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for FeError {
    fn from(e: std::io::Error) -> Self {
        FeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FeError>;
