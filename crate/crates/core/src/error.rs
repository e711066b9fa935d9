use thiserror::Error;

/// Precondition and domain errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alphabet must have at least 2 symbols, got {0}")]
    AlphabetTooSmall(usize),

    #[error("alphabet mismatch: {left} vs {right} symbols")]
    AlphabetMismatch { left: usize, right: usize },

    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("contraction ratio λ_{index} = {value} must lie in (0,1)")]
    InvalidRatio { index: usize, value: f64 },

    #[error("orthogonal part O_{index} fails ‖OᵀO − I‖ ≤ 1e-10 (residual {residual:e})")]
    NotOrthogonal { index: usize, residual: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("radius {r} must be below min λ_i = {threshold}")]
    RadiusTooLarge { r: f64, threshold: f64 },

    #[error("word too short: need length at least {required}, got {actual}")]
    WordTooShort { required: usize, actual: usize },

    #[error("insufficient depth for tolerance: need at least {required} symbols, got {actual}")]
    InsufficientDepth { required: usize, actual: usize },

    #[error("transition structure is not irreducible: {0}")]
    NotIrreducible(String),

    #[error(
        "denominator {denominator} cannot keep {positives} positive entries of a row at ≥ 1/D"
    )]
    DenominatorTooSmall { denominator: u64, positives: usize },

    #[error("zero weights present with q = {q} ≤ 0")]
    ZeroWeightNonPositiveQ { q: f64 },

    #[error("α = {alpha} outside [{lo}, {hi}]")]
    AlphaOutOfRange { alpha: f64, lo: f64, hi: f64 },

    #[error("enumeration budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: u128, budget: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
