use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error(
        "non-finite intermediate for margin {margin} at outer node {outer}, inner node {inner}"
    )]
    Evaluation {
        margin: usize,
        outer: usize,
        inner: usize,
    },
    #[error("study {study}: pmf evaluates to {value}")]
    StudyPmf { study: usize, value: f64 },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid model: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            expected,
        }
    }
}
