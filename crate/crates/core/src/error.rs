use thiserror::Error;

/// Library-wide error type. The CLI maps these onto distinct exit codes, so
/// variants are grouped by failure class rather than by module.
#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown catalog entry `{0}`")]
    CatalogMiss(String),

    #[error("field construction failed: {0}")]
    Construction(String),

    #[error("structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("time {t} outside path domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("propagation failure: worst residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Propagation { residual: f64, tolerance: f64 },

    #[error("index stabilization failed: counts {first} and {second} at the two smallest epsilon levels")]
    IndexUnstable { first: i64, second: i64 },

    #[error("numerical integrity violated: {0}")]
    Integrity(String),

    #[error("crossing at t = {t:.12} unresolved: |D| minimum {min:.3e} in the ambiguous band")]
    Precision { t: f64, min: f64 },

    #[error("internal consistency violated: {0}")]
    InternalConsistency(String),

    #[error("horizon {1} too small: {0}")]
    InsufficientHorizon(String, f64),

    #[error("value {value} outside the admissible interval [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("angle lift failed: increment bound unattainable at max refinement near t = {0}")]
    LiftFailure(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("equivalence violation: {0}")]
    EquivalenceViolation(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
