use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("inadmissible weight spec: {0}")]
    InadmissibleSpec(String),
    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),
    #[error("integrand non-finite at t = {0}")]
    NonFiniteIntegrand(f64),
    #[error("grid needs at least 8 points, got {0}")]
    BadCount(usize),
    #[error("no grid point inside window ({0}, {1})")]
    EmptyWindow(f64, f64),
    #[error("function is not quasiconcave: {0}")]
    NotQuasiconcave(String),
    #[error("covering ratio must exceed 1, got {0}")]
    DegenerateRatio(f64),
    #[error("covering interval {0} satisfies neither the Z1 nor the Z2 bound")]
    ClassificationFailure(isize),
    #[error("out of scope: {0}")]
    OutOfScope(String),
    #[error("phi is not finite anywhere on (0, L)")]
    NonFinitePhi,
    #[error("degenerate exponent: {0}")]
    ExponentDegenerate(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("sequence does not have the required strong monotonicity")]
    WrongMonotonicity,
    #[error("sequence entries must be positive")]
    NonPositive,
    #[error("covering sequence has no interior interval")]
    EmptyCovering,
    #[error("step function must be nonincreasing")]
    NotMonotone,
    #[error("batch of runs is empty")]
    EmptyBatch,
}

pub type Result<T> = std::result::Result<T, CoreError>;
