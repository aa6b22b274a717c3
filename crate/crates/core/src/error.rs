use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("vocabulary is not valid UTF-8: {0}")]
    VocabEncoding(#[from] std::string::FromUtf8Error),
    #[error("duplicate token {token:?} on lines {first} and {second}")]
    DuplicateToken {
        token: String,
        first: usize,
        second: usize,
    },
    #[error("vocabulary is missing special token {0}")]
    MissingSpecial(&'static str),

    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("method {method} {problem}")]
    PolarityMismatch {
        method: &'static str,
        problem: &'static str,
    },
    #[error("category list must be nonempty with unique entries: {0}")]
    InvalidCategories(String),
    #[error("missing score for ({category}, {polarity})")]
    MissingScore { category: String, polarity: String },
    #[error("class distribution for {category} sums to {sum}, expected 1")]
    InvalidDistribution { category: String, sum: f64 },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("at least 2 items are needed to split, got {0}")]
    TooFewItems(usize),
    #[error("lexicon entry for {category:?} has an empty {list} list")]
    EmptyLexiconEntry { category: String, list: &'static str },
    #[error("lexicon has no entry for category {0:?}")]
    LexiconMissing(String),
    #[error("review {id}: {problem}")]
    InvalidReview { id: String, problem: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{what} index {index} out of bounds (size {bound}) at position {position}")]
    IndexOutOfBounds {
        what: &'static str,
        index: usize,
        bound: usize,
        position: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("gold label {label} out of range for {classes} classes")]
    GoldOutOfRange { label: usize, classes: usize },

    #[error("review ids differ: missing from predictions {missing_in_predictions:?}, missing from gold {missing_in_gold:?}")]
    IdMismatch {
        missing_in_predictions: Vec<String>,
        missing_in_gold: Vec<String>,
    },

    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
