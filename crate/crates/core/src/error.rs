use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Training,
    Artifact,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // schema
    #[error("duplicate feature `{0}` in schema")]
    DuplicateFeature(String),
    #[error("unknown feature kind `{kind}` on schema line {line}")]
    UnknownKind { kind: String, line: usize },
    #[error("malformed schema line {line}: `{text}`")]
    MalformedSchemaLine { line: usize, text: String },
    #[error("schema declares no features")]
    EmptySchema,

    // rows
    #[error("expected {expected} columns, found {found}")]
    ColumnCountMismatch { expected: usize, found: usize },
    #[error("non-finite numeric value `{token}` in column `{column}`")]
    NonFiniteNumeric { column: String, token: String },
    #[error("unparsable numeric value `{token}` in column `{column}`")]
    UnparsableNumeric { column: String, token: String },
    #[error("row has no revision id")]
    MissingRevisionId,
    #[error("batch {batch_id}, line {line}: {source}")]
    Row {
        batch_id: String,
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("duplicate batch id `{0}`")]
    DuplicateBatch(String),

    // truth
    #[error("malformed truth line {line}: `{text}`")]
    MalformedTruthLine { line: usize, text: String },
    #[error("conflicting truth entries for revision `{0}`")]
    DuplicateTruthEntry(String),

    // sampling
    #[error("need {requested} negatives but only {available} are available")]
    InsufficientNegatives { requested: u64, available: u64 },
    #[error("split of {n} rows with train fraction {fraction} leaves one side empty")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("minority class has {available} rows, fewer than {k} folds")]
    TooFewMinoritySamples { k: usize, available: usize },
    #[error("invalid sample configuration: {0}")]
    InvalidSampleConfig(String),

    // features
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no features survive selection")]
    NoFeaturesRetained,
    #[error("feature `{0}` has no observed values")]
    AllMissingFeature(String),
    #[error("row `{0}` has no label")]
    UnlabeledRow(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    // learners
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("boosting produced a non-finite margin in round {round}")]
    NonFiniteMargin { round: usize },
    #[error("model expects {expected} columns, matrix has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    // evaluation
    #[error("metric requires both classes")]
    SingleClassInput,
    #[error("metric requires at least one positive")]
    NoPositives,
    #[error("score vector `{tag}` has {found} entries, labels have {expected}")]
    MisalignedScores { tag: String, expected: usize, found: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("config {config}, fold {fold}: {source}")]
    Fold {
        config: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Row { source, .. } | Fold { source, .. } => source.class(),
            InvalidSampleConfig(_) | InvalidHyperparameter(_) | EmptyGrid => ErrorClass::Config,
            SingleClassTraining | NonFiniteLoss { .. } | NonFiniteMargin { .. } => ErrorClass::Training,
            _ => ErrorClass::Data,
        }
    }
}
