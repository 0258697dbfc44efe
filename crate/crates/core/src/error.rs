//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}`: {detail}")]
    BadParameter { name: String, detail: String },

    #[error("interval count must be at least 1")]
    ZeroIntervals,

    #[error(
        "cannot divide parameter `{param}` into {k} intervals: only {distinct} distinct values"
    )]
    KTooLarge { param: String, k: usize, distinct: u64 },

    #[error("encoded value {value} for parameter `{param}` is outside [{low}, {high})")]
    EncodedOutOfRange {
        param: String,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("setting has {got} values but the space has {expected} parameters")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("setting violates parameter ranges: {}", violations.join("; "))]
    RangeViolations { violations: Vec<String> },

    #[error("cannot encode value for parameter `{param}`: {detail}")]
    EncodeError { param: String, detail: String },

    #[error("parameter space definition: {detail}")]
    SpaceParse { detail: String },

    #[error("grid batch of {cells} cells exceeds the ceiling of {ceiling}")]
    BatchCeiling { cells: u128, ceiling: u64 },

    #[error("batch of {batch} tests exceeds the remaining budget of {remaining}")]
    BatchExceedsBudget { batch: usize, remaining: u64 },

    #[error("no successful test in the sample set")]
    AllTestsFailed,

    #[error("best sample is not a member of the sample set")]
    BestMissing,

    #[error("utility expression: {detail}")]
    UtilityParse { detail: String },

    #[error("metric `{name}` missing from measured metrics")]
    MissingMetric { name: String },

    #[error("metric `{name}` is zero in a denominator")]
    ZeroDenominator { name: String },

    #[error("utility value is not finite: {detail}")]
    NonFinite { detail: String },

    #[error("metric `{name}` is not declared strictly positive; cannot minimize through an inverse")]
    NotDeclaredPositive { name: String },

    #[error("utility references metric `{name}` which the target does not declare")]
    UnknownMetric { name: String },

    #[error("unknown landscape `{id}` (available: {available})")]
    UnknownLandscape { id: String, available: String },

    #[error("landscape variant `{id}`: {detail}")]
    BadVariant { id: String, detail: String },

    #[error("target definition: {detail}")]
    BadTargetSpec { detail: String },

    #[error("job file: {detail}")]
    JobParse { detail: String },

    #[error("job invalid: {detail}")]
    JobInvalid { detail: String },

    #[error("history line {line}: {detail}")]
    HistoryCorrupt { line: usize, detail: String },

    #[error("history belongs to a different job (schema hash {found}, expected {expected})")]
    SchemaMismatch { expected: String, found: String },

    #[error("target unusable: every test of the first batch failed (round {round})")]
    TargetUnusable { round: u64 },

    #[error("history replay diverged at test {test_index}: {detail}")]
    ReplayMismatch { test_index: u64, detail: String },

    #[error("evaluation grid of {points} points exceeds the limit of {limit}")]
    GridGuard { points: u128, limit: u64 },

    #[error("subspace bounds: {detail}")]
    InvalidBounds { detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
