use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by [`ErrorClass`], which the CLI maps onto its exit
/// codes (1 configuration, 2 numerical, 3 invariant violation).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sign interface at {coordinate} (axis {axis}) is not a grid node for spacing {spacing}")]
    GridMisalignment {
        axis: usize,
        coordinate: f64,
        spacing: f64,
    },
    #[error("weight |r| = {value:e} on cell {cell} is below 1e-12")]
    SingularWeight { cell: usize, value: f64 },
    #[error("diffusion coefficient {value} on cell {cell}, axis {axis} is not positive")]
    EllipticityViolation { cell: usize, axis: usize, value: f64 },
    #[error("degenerate partition: {0} side is empty")]
    DegeneratePartition(&'static str),
    #[error("unknown builtin problem {0:?}")]
    UnknownProblem(String),
    #[error("refinement factor must be at least 2, got {0}")]
    InvalidFactor(usize),
    #[error("unknown sweep parameter {0:?}")]
    UnknownParameter(String),

    #[error("eigensolver failed: {0}")]
    EigSolveFailure(String),
    #[error("nonreal eigenvalue {0} has no conjugate partner")]
    UnpairedNonreal(Complex64),
    #[error("shift {lambda} is too close to the spectrum (condition estimate {condition:e})")]
    NearSingularShift { lambda: Complex64, condition: f64 },
    #[error("vector is not discretely harmonic: interior residual {residual:e} exceeds {bound:e}")]
    NotHarmonic { residual: f64, bound: f64 },
    #[error("contour solver did not converge: {0}")]
    ContourNoConvergence(String),
    #[error("kernel vector residual {residual:e} exceeds {bound:e}")]
    KernelResidualTooLarge { residual: f64, bound: f64 },
    #[error("M({lambda}) is numerically singular (sigma_min {sigma_min:e})")]
    SingularDtN { lambda: Complex64, sigma_min: f64 },
    #[error("K - eta I is not positive definite for eta = {0}")]
    ShiftNotPositive(f64),
    #[error("Gram matrix W(E+ - E-) is not positive definite (lambda_min {0:e})")]
    IndefiniteGram(f64),
    #[error("massless interface nodes cannot be condensed: {0}")]
    Condensation(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Invariant,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Config(_)
            | GridMisalignment { .. }
            | SingularWeight { .. }
            | EllipticityViolation { .. }
            | DegeneratePartition(_)
            | UnknownProblem(_)
            | InvalidFactor(_)
            | UnknownParameter(_)
            | Io(_)
            | Json(_)
            | Csv(_) => ErrorClass::Config,
            InvariantViolation(_) => ErrorClass::Invariant,
            _ => ErrorClass::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 1,
            ErrorClass::Numerical => 2,
            ErrorClass::Invariant => 3,
        }
    }
}
