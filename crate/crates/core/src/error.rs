use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed token {token:?}")]
    MalformedToken { line: usize, token: String },

    #[error("line {line}: token {token:?} is not in the item catalog")]
    UnknownToken { line: usize, token: String },

    #[error("input contains no sessions")]
    EmptyInput,

    #[error("catalog file line {line}: {reason}")]
    MalformedCatalog { line: usize, reason: String },

    #[error("item index {index} is outside the catalog (1..={item_count})")]
    ItemOutOfRange { index: usize, item_count: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("{bins} bins requested but only {distinct} distinct history lengths exist")]
    TooManyBins { bins: usize, distinct: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("catalog mismatch: {0}")]
    CatalogMismatch(String),

    #[error("malformed model document: {0}")]
    MalformedModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
