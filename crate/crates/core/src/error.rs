use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // manifold validation
    #[error("interval [{a}, {b}] is empty (need a < b)")]
    EmptyInterval { a: f64, b: f64 },
    #[error("Gram matrix is not positive definite (smallest eigenvalue {min_eigenvalue})")]
    NonPositiveDefiniteGram { min_eigenvalue: f64 },
    #[error("Gram matrix is malformed: {0}")]
    MalformedGram(String),
    #[error("warped-product fiber must be closed, found a fiber with boundary")]
    FiberHasBoundary,
    #[error("abstract fiber spectrum must contain the eigenvalue 0")]
    SpectrumMissingZero,
    #[error("abstract fiber spectrum must be sorted and non-negative")]
    SpectrumNotSorted,
    #[error("invalid manifold spec: {0}")]
    InvalidSpec(String),

    // spectra
    #[error("lattice enumeration would visit about {estimate} points, over the budget of {budget}")]
    CutoffTooLarge { estimate: f64, budget: usize },
    #[error("eigenvalue solver failed to converge for index {index}: {detail}")]
    ConvergenceFailure { index: usize, detail: String },
    #[error("fiber spectrum is certified only up to {available}, need {required}")]
    FiberSpectrumTooShort { available: f64, required: f64 },
    #[error("factor spectrum is certified only up to {available}, need {required}")]
    FactorCutoffInsufficient { available: f64, required: f64 },
    #[error("discrete eigensolver stagnated: {0}")]
    EigensolverStagnation(String),

    // heat functions
    #[error("tail bound {tail} dominates value {value} at t = {t}; raise the cutoff")]
    TailDominates { t: f64, value: f64, tail: f64 },
    #[error("eigenfunctions or mass coefficients are missing for this resolution")]
    MissingEigenfunctions,
    #[error("time stepping became unstable: {0}")]
    StepSizeUnstable(String),

    // tensor engine
    #[error("metric is singular at the sample point (condition number {condition})")]
    SingularMetric { condition: f64 },
    #[error("point is not on a declared boundary face")]
    NotOnBoundary,
    #[error("derivative estimate unstable: Richardson disagreement {disagreement}")]
    DerivativeUnstable { disagreement: f64 },

    // asymptotics
    #[error("geometry not supported for coefficient evaluation: {0}")]
    UnsupportedGeometry(String),
    #[error("least-squares basis is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("acceptance failed: {0}")]
    AcceptanceFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
