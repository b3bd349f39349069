use thiserror::Error;

/// Errors reported by geometry, weight, and solver operations.
///
/// Mathematical failures (a violated inequality, a non-certificate) are not
/// errors; those are reported as witnesses in the respective result types.
#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),

    #[error("modulus {0} does not fit below 2^31")]
    ModulusTooLarge(u64),

    #[error("operands live in different fields ({0} vs {1})")]
    MixedFields(String, String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ambient dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("zero direction vector does not define a line")]
    ZeroDirection,

    #[error("division by zero")]
    DivisionByZero,

    #[error("weight must be positive: {0}")]
    NonPositiveWeight(String),

    #[error("weight must be nonnegative: {0}")]
    NegativeWeight(String),

    #[error("empty weight family")]
    EmptyWeights,

    #[error("chain layer {0} has zero mass; the heaviness inequality forbids this")]
    ZeroLayerMass(usize),

    #[error("empty chain has no rho weights; use the S = 1 branch")]
    EmptyChain,

    #[error("line does not pass through the origin")]
    NotThroughOrigin,

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("lightness audit failed: {0}")]
    Audit(String),

    #[error("point {0} carries positive density but meets no kernel tuple")]
    SaturationViolated(String),

    #[error("exponent q must satisfy q >= 1, got {0}")]
    BadExponent(String),

    #[error("symmetric operation on an instance whose kernel or weights are not symmetric")]
    NotSymmetric,

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("certificate is inconsistent: {0}")]
    BadCertificate(String),

    #[error("instance file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
