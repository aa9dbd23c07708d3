use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported subsystem dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("empty operand list")]
    Empty,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("site {site} out of range for {sites} subsystems")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("operator is not Hermitian (relative residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ambiguous eigenstate assignment for basis state {label:?} (overlaps {best:.4} vs {second:.4})")]
    AmbiguousLabel { label: Vec<usize>, best: f64, second: f64 },
    #[error("Rabi calibration reached only {best_transfer:.4} transfer (at omega1 = {best_omega1:.6})")]
    Calibration { best_omega1: f64, best_transfer: f64 },
    #[error("pulse duration {duration} is not an integer multiple of dt = {dt}")]
    StepMismatch { duration: f64, dt: f64 },
    #[error("sequence timing: {0}")]
    Timing(String),
    #[error("element {index}: {source}")]
    Element { index: usize, source: Box<Error> },
    #[error("fit failed: {0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn at(self, index: usize) -> Error {
        Error::Element { index, source: Box::new(self) }
    }
}
