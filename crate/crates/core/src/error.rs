use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped by the exit code the CLI maps them to: input and
/// schema problems, degenerate data, and internal invariant violations.
#[derive(Debug, Error)]
pub enum Error {
    // ---- input / schema ----
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV file has no header row")]
    HeaderMissing,

    #[error("cannot parse {token:?} at row {row}, column {col}")]
    ParseError { row: usize, col: usize, token: String },

    #[error("negative feature value at row {row}, column {col}")]
    NegativeFeature { row: usize, col: usize },

    #[error("missing value at row {row}, column {col}")]
    MissingValue { row: usize, col: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("invalid column: {0}")]
    InvalidColumn(String),

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("columns have inconsistent lengths ({expected} vs {found} in {column:?})")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown factor {0:?}")]
    UnknownFactor(String),

    #[error("unknown category {category:?} for factor {factor:?}")]
    UnknownCategory { factor: String, category: String },

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("unknown axis {0:?}")]
    UnknownAxis(String),

    #[error("axis sets overlap on {0:?}")]
    OverlappingAxes(String),

    #[error("axis set must not be empty")]
    EmptyAxisSet,

    #[error("invalid probability table: {0}")]
    InvalidPmf(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("subset size {m} is outside 1..={available}")]
    BadSubsetSize { m: usize, available: usize },

    #[error("prediction input has {found} values, forest expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("predictions and truths differ in length ({0} vs {1})")]
    PredictionLengthMismatch(usize, usize),

    // ---- degenerate data ----
    #[error("split leaves an empty side (n = {n}, train size = {train})")]
    DegenerateSplit { n: usize, train: usize },

    #[error("no rows match {factor:?} = {category:?}")]
    EmptyStratum { factor: String, category: String },

    #[error("stratum {0:?} contains fewer than two target classes")]
    SingleClassStratum(String),

    #[error("target factor {0:?} has fewer than two distinct classes")]
    DegenerateTarget(String),

    #[error("selected features sum to zero in sample {0}")]
    ZeroRowSum(usize),

    #[error("joint table would need {cells} cells, cap is {cap}")]
    CellCapExceeded { cells: u128, cap: usize },

    #[error("exhaustive subset search over {size} axes exceeds the cap of {cap}")]
    SubsetSearchTooLarge { size: usize, cap: usize },

    #[error("at least two samples are required to train")]
    SingleSample,

    #[error("no features available for training")]
    NoFeatures,

    #[error("node has no samples")]
    EmptyNode,

    #[error("no labels supplied")]
    EmptyLabels,

    #[error("empty input")]
    Empty,

    // ---- internal ----
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Process exit code for this error: 2 input/schema, 3 degenerate data,
    /// 4 internal invariant violation.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            DegenerateSplit { .. }
            | EmptyStratum { .. }
            | SingleClassStratum(_)
            | DegenerateTarget(_)
            | ZeroRowSum(_)
            | CellCapExceeded { .. }
            | SubsetSearchTooLarge { .. }
            | SingleSample
            | NoFeatures
            | EmptyNode
            | EmptyLabels
            | Empty => 3,
            Invariant(_) => 4,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Serialization(format!("{other:?}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
