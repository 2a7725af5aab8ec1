use thiserror::Error;

/// Why a conjugate solve decided the moment point is not interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutsideReason {
    /// Newton iterates left the `‖α‖∞ ≤ 1e4` box.
    Diverged,
    /// The iteration budget ran out before the gradient met tolerance.
    IterationLimit,
}

impl std::fmt::Display for OutsideReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutsideReason::Diverged => f.write_str("natural parameter diverged"),
            OutsideReason::IterationLimit => f.write_str("iteration limit exhausted"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state space needs at least 2 states, got {0}")]
    TooFewStates(usize),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("component {index} = {value:e} is below the open-simplex floor")]
    NotPositive { index: usize, value: f64 },

    #[error("components sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("invalid observable matrix: {0}")]
    InvalidObservable(String),

    #[error("moment point outside the open convex hull: {reason} after {iterations} iterations")]
    OutsideDomain { reason: OutsideReason, iterations: usize },

    #[error("explained covariance is degenerate (reciprocal condition {rcond:e})")]
    DegenerateObservable { rcond: f64 },

    #[error("frequency is off the moment fiber (residual {residual:e})")]
    FiberViolation { residual: f64 },

    #[error("product layout {n1}x{n2} does not match joint size {n}")]
    LayoutMismatch { n1: usize, n2: usize, n: usize },

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    #[error("fiber polytope is empty")]
    EmptyFiber,

    #[error("chart vertices are rank deficient (rank {rank}, need {needed})")]
    RankDeficient { rank: usize, needed: usize },

    #[error("chart point leaves the open patch at component {index} ({value:e})")]
    PatchBoundary { index: usize, value: f64 },

    #[error("transition matrix is not a valid stochastic kernel: {0}")]
    InvalidKernel(String),

    #[error("transition matrix is not primitive")]
    NonPrimitive,

    #[error("invalid pair frequency: {0}")]
    InvalidPairFrequency(String),

    #[error("pair frequency charges ({i}, {j}) where the kernel has zero probability")]
    SupportViolation { i: usize, j: usize },

    #[error("state {state} out of range for {n} states")]
    StateOutOfRange { state: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::TooFewStates(_) => "TOO_FEW_STATES",
            Error::NonFinite { .. } => "NON_FINITE",
            Error::NotPositive { .. } => "NOT_POSITIVE",
            Error::NotNormalized { .. } => "NOT_NORMALIZED",
            Error::InvalidObservable(_) => "INVALID_OBSERVABLE",
            Error::OutsideDomain { .. } => "OUTSIDE_DOMAIN",
            Error::DegenerateObservable { .. } => "DEGENERATE_OBSERVABLE",
            Error::FiberViolation { .. } => "FIBER_VIOLATION",
            Error::LayoutMismatch { .. } => "LAYOUT_MISMATCH",
            Error::CapExceeded(_) => "CAP_EXCEEDED",
            Error::EmptyFiber => "EMPTY_FIBER",
            Error::RankDeficient { .. } => "RANK_DEFICIENT",
            Error::PatchBoundary { .. } => "PATCH_BOUNDARY",
            Error::InvalidKernel(_) => "INVALID_KERNEL",
            Error::NonPrimitive => "NON_PRIMITIVE",
            Error::InvalidPairFrequency(_) => "INVALID_PAIR_FREQUENCY",
            Error::SupportViolation { .. } => "SUPPORT_VIOLATION",
            Error::StateOutOfRange { .. } => "STATE_OUT_OF_RANGE",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
        }
    }

    /// Errors raised by the mathematics on otherwise well-formed input.
    ///
    /// The remaining variants describe malformed input (bad shapes, bad
    /// normalization) and are treated as specification errors by callers.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::OutsideDomain { .. }
                | Error::DegenerateObservable { .. }
                | Error::FiberViolation { .. }
                | Error::EmptyFiber
                | Error::RankDeficient { .. }
                | Error::PatchBoundary { .. }
                | Error::NonPrimitive
                | Error::SupportViolation { .. }
                | Error::CapExceeded(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
