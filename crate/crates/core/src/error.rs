use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weight {weight} at point {index} is not positive")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, expected 1 within 1e-12")]
    WeightSumOff { sum: f64 },
    #[error("non-finite entry in {0}")]
    NonFiniteEntry(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("prices outside K: p[{index}] = {value} < 0")]
    PricesOutsideK { index: usize, value: f64 },
    #[error("non-finite value encountered at iteration {iteration}")]
    NonFiniteEncountered { iteration: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("numerical breakdown in simplex: {0}")]
    NumericalBreakdown(String),
    #[error("problem too large: {vars} variables exceeds cap {cap}")]
    TooLarge { vars: usize, cap: usize },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("primal recovery failed for every eps in the schedule")]
    RecoveryFailed,
    #[error("{0} goods exceeds the supported range 1..=12")]
    TooManyGoods(usize),
    #[error("dyadic level {0} outside 1..=30")]
    LevelOutOfRange(u32),
    #[error("coupling row {row} sums to {sum}, weight is {weight}")]
    MarginalMismatch { row: usize, sum: f64, weight: f64 },
    #[error("size out of range: {0}")]
    SizeOutOfRange(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
