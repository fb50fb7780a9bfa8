use thiserror::Error;

/// Coarse grouping of errors, one per module, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorFamily {
    Dynamics,
    Orbits,
    Groups,
    Cocycles,
    Solver,
    Diffeo,
    Conformal,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // torus dynamics
    #[error("matrix is not unimodular: det = {det}")]
    NotUnimodular { det: String },
    #[error("matrix must be square with dimension >= 2, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("eigenvalue {re:+.6}{im:+.6}i has modulus within 1e-8 of 1")]
    EigenvalueOnUnitCircle { re: f64, im: f64 },
    #[error("splitting is defective (non-diagonalizable) at eigenvalue {re:+.6}{im:+.6}i")]
    DefectiveSplittingUnsupported { re: f64, im: f64 },
    #[error(
        "fixed-point precision exhausted: {needed:.1} bits of expansion, budget {budget} bits"
    )]
    PrecisionExhausted { needed: f64, budget: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("perturbation rejected: cone condition fails at {point:?} (margin {margin:.3e})")]
    PerturbationTooLarge { point: Vec<f64>, margin: f64 },
    #[error("splitting estimate did not converge: residual {residual:.3e} > tol {tol:.3e}")]
    NoConvergence { residual: f64, tol: f64 },

    // periodic orbits and closing
    #[error("periodic point budget exceeded: {count} points for period {n}, cap {cap}")]
    OrbitBudgetExceeded { n: u32, count: String, cap: u64 },
    #[error("return distance {distance:.3e} is not below epsilon0 = {eps0:.3e}")]
    NotClose { distance: f64, eps0: f64 },
    #[error("lattice shift is ambiguous: residual sits on a half-cell boundary")]
    AmbiguousLatticeShift,
    #[error("invalid return time {0}")]
    InvalidPeriod(String),

    // groups
    #[error("group variant mismatch: {0}")]
    VariantMismatch(String),
    #[error("matrix is singular and cannot be inverted")]
    SingularInverse,
    #[error("matrix logarithm failed: {0}")]
    LogBranchFailure(String),

    // cocycles
    #[error("integration step {dt} too large: error estimate {estimate:.3e} exceeds {tol:.3e}")]
    StepTooLarge { dt: f64, estimate: f64, tol: f64 },
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    // solver
    #[error("orbit coverage radius {coverage:.4} exceeds {limit:.4}")]
    CoverageTooCoarse { coverage: f64, limit: f64 },

    // circle diffeomorphisms
    #[error("Fourier resolution exceeded: tail energy {tail:.3e} above tolerance {tol:.3e}")]
    ResolutionExceeded { tail: f64, tol: f64 },
    #[error("Newton inversion stalled at node {node} (residual {residual:.3e})")]
    NewtonStall { node: usize, residual: f64 },
    #[error("not an orientation-preserving diffeomorphism: min derivative {min_derivative:.3e}")]
    NotDiffeomorphism { min_derivative: f64 },

    // conformal structures
    #[error("derivative restricted to the sub-bundle is singular")]
    SingularRestriction,
    #[error("form is not positive definite with unit determinant: {0}")]
    InvalidForm(String),
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        use Error::*;
        match self {
            NotUnimodular { .. }
            | BadShape { .. }
            | EigenvalueOnUnitCircle { .. }
            | DefectiveSplittingUnsupported { .. }
            | PrecisionExhausted { .. }
            | DimensionMismatch { .. }
            | PerturbationTooLarge { .. }
            | NoConvergence { .. } => ErrorFamily::Dynamics,
            OrbitBudgetExceeded { .. }
            | NotClose { .. }
            | AmbiguousLatticeShift
            | InvalidPeriod(_) => ErrorFamily::Orbits,
            VariantMismatch(_) | SingularInverse | LogBranchFailure(_) => ErrorFamily::Groups,
            StepTooLarge { .. } | InvalidGenerator(_) => ErrorFamily::Cocycles,
            CoverageTooCoarse { .. } => ErrorFamily::Solver,
            ResolutionExceeded { .. } | NewtonStall { .. } | NotDiffeomorphism { .. } => {
                ErrorFamily::Diffeo
            }
            SingularRestriction | InvalidForm(_) => ErrorFamily::Conformal,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
