use thiserror::Error;

use crate::compositional::CompositionError;
use crate::eval::EvalError;
use crate::geometry::GeometryError;
use crate::shift::ScoreError;
use crate::store::StoreError;
use crate::theory::TheoryError;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Input files or records are malformed or inconsistent.
    Data,
    /// A parameter or configuration value is out of range.
    Config,
    /// An internal cross-check failed.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("sample {sample_id}: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn for_sample(sample_id: &str, source: impl Into<Error>) -> Self {
        Error::Sample {
            sample_id: sample_id.to_owned(),
            source: Box::new(source.into()),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Sample { source, .. } => source.kind(),
            Error::Theory(TheoryError::InternalInconsistency { .. }) => ErrorKind::Internal,
            Error::Theory(TheoryError::InvalidParameter(_)) => ErrorKind::Config,
            Error::Score(ScoreError::InvalidConfig(_)) => ErrorKind::Config,
            Error::Eval(EvalError::InvalidConfig(_)) => ErrorKind::Config,
            Error::Composition(CompositionError::InvalidParameter(_)) => ErrorKind::Config,
            Error::Geometry(GeometryError::InvalidBlur(_)) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}
