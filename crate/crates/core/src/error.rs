use thiserror::Error;

/// Errors raised by the encoding calculus, the test pipelines and the CLI front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate interval [{a}, {b}]: lower end must be strictly below upper end")]
    DegenerateInterval { a: f64, b: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("the zero vector cannot be amplitude-encoded")]
    ZeroState,

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("amplification precondition violated: largest singular value {max_sv} exceeds (1-delta)/gamma = {bound}")]
    AmplificationPrecondition { max_sv: f64, bound: f64 },

    #[error("sup-norm precondition violated: certified sup {sup} exceeds 1/2 on [-1, 1]")]
    SupNorm { sup: f64 },

    #[error("operator is not Hermitian")]
    NotHermitian,

    #[error("operator is not positive semidefinite (eigenvalue {0})")]
    NotPositiveSemidefinite(f64),

    #[error("index {index} out of range 1..={dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("linear combination of zero encodings")]
    EmptyCombination,

    #[error("subnormalizations differ ({0} vs {1}); equalize with scale_down first")]
    UnequalAlpha(f64, f64),

    #[error("operator norm {norm} exceeds alpha + eps = {bound}")]
    NormBound { norm: f64, bound: f64 },

    #[error("dense operator of dimension {0} exceeds the simulator limit")]
    TooLarge(usize),

    #[error("monomial exponent {exponent} exceeds the configured cap {cap}")]
    DegreeCap { exponent: u32, cap: u32 },

    #[error("grid: {0}")]
    Grid(String),

    #[error("weights: {0}")]
    Weights(String),

    #[error("input: {0}")]
    Input(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
