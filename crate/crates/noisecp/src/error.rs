use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("label frequency {index} is not positive ({value})")]
    NonPositiveFrequency { index: usize, value: f64 },
    #[error("frequencies must sum to 1 (got {0})")]
    FrequenciesNotNormalized(f64),
    #[error("epsilon {0} outside [0, 1)")]
    EpsilonOutOfRange(f64),
    #[error("nu {0} outside [0, 1]")]
    NuOutOfRange(f64),
    #[error("two-level model needs an even number of labels (got {0})")]
    OddK(usize),
    #[error("need at least two labels (got {0})")]
    TooFewLabels(usize),
    #[error("column {column} of the transition matrix is not a distribution")]
    NotColumnStochastic { column: usize },
    #[error("matrix is singular or ill-conditioned (condition number {0:e})")]
    SingularM(f64),
    #[error("label {label} out of range for K={k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid probability row {row}: {reason}")]
    InvalidProbabilities { row: usize, reason: String },
    #[error("no calibration points with noisy label {0}")]
    EmptyLabelClass(usize),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("alpha {0} outside (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("gamma {0} outside (0, 1)")]
    GammaOutOfRange(f64),
    #[error("noise region invalid: {0}")]
    RegionInvariantViolation(String),
    #[error("density bounds f_max >= f_min > 0 are required for this bound")]
    MissingDensityBounds,
    #[error("noisy confusion matrix is singular")]
    SingularQtilde,
    #[error("no clean samples with label {0}")]
    EmptyCleanClass(usize),
    #[error("classifier accuracy is at chance level")]
    ClassifierAtChance,
    #[error("estimating equation denominator is degenerate ({0:e})")]
    DegenerateDenominator(f64),
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("line {line}: schema mismatch: {reason}")]
    SchemaMismatch { line: usize, reason: String },
    #[error("line {line}: bad label {value}")]
    BadLabel { line: usize, value: String },
    #[error("line {line}: probabilities sum to {sum}")]
    NonNormalizedRow { line: usize, sum: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(String),
    #[error("repetition {rep}: {source}")]
    Repetition { rep: usize, source: Box<Error> },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
