use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice sets must contain at least one point")]
    EmptySet,

    #[error("dimension {0} is not supported (expected 1, 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate point {0:?}")]
    DuplicatePoint(Vec<i64>),

    #[error("coordinate {value} exceeds the configured magnitude bound {bound}")]
    CoordinateBound { value: i128, bound: i64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("grid of {requested} samples exceeds the sample budget {budget}")]
    SampleBudget { requested: u128, budget: usize },

    #[error("outside the Pichorides domain: {0}")]
    Domain(String),

    #[error("base function {label} violates its floor: measured {measured} < required {required}")]
    FloorViolation {
        label: i64,
        measured: f64,
        required: f64,
    },

    #[error("sup-norm violation on base function {label}: max modulus {max_modulus}")]
    SupViolation { label: i64, max_modulus: f64 },

    #[error("prime window {primes:?} has modulus {modulus}, above the materialization bound {bound}")]
    PrimeResidueTooLarge {
        primes: Vec<u64>,
        modulus: u128,
        bound: u64,
    },

    #[error("Freiman degree {degree} is below the required degree {delta}")]
    DegreeInsufficient { delta: u64, degree: u64 },

    #[error("brute-force Freiman check needs {work} tuples, above the budget {budget}")]
    FreimanBudget { work: u128, budget: u128 },

    #[error("point {0:?} is outside the map domain")]
    PointOutsideDomain(Vec<i64>),

    #[error("aliasing destroys exactness: {0}")]
    Aliased(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
