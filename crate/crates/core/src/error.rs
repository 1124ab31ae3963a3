use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty set")]
    EmptySet,
    #[error("non-finite element at index {index}")]
    NonFinite { index: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("covariance undefined for a set of size {n}")]
    CovarianceUndefined { n: usize },
    #[error("set of size {n} exceeds the enumeration cap of {cap}; use the approximate mode")]
    TooLarge { n: usize, cap: usize },
    #[error("enumerating all {k}-subsets of {n} elements exceeds the budget of {budget} subsets")]
    SubsetBudget { n: usize, k: usize, budget: u64 },
    #[error("dynamic-programming table of {cells} cells exceeds the limit of {limit}")]
    TableTooLarge { cells: u128, limit: u128 },
    #[error("bound undefined for this input: {0}")]
    BoundUndefined(String),
    #[error("equality query on a continuous distribution needs a positive granularity")]
    ZeroGranularity,
    #[error("support misses the distribution (captured mass {captured:e})")]
    SupportMiss { captured: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("at k = {k}: {source}")]
    AtSize { k: usize, source: Box<Error> },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at(self, k: usize) -> Self {
        Error::AtSize { k, source: Box::new(self) }
    }

    /// Strips any `AtSize` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtSize { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
