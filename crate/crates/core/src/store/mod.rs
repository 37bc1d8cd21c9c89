//! Persistent data types and the on-disk formats shared with the extractor.
//!
//! * vocabularies are JSON (`{"dim", "classes": [...]}`),
//! * embeddings and coresets live in `.coodt` tensor packs,
//! * dataset manifests are JSON files pointing at tensor packs.
//!
//! Every loader enforces the type invariants (unit-norm embeddings, shared
//! dimension, positions in the unit square) at the boundary so that the
//! scoring code can assume them.

mod manifest;
mod pack;
mod record;
mod vocab;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use manifest::{validate_manifest, Dataset, DatasetManifest, Finding, Role};
pub use pack::{decode_tensors, encode_tensors, read_tensors, write_tensors, Tensor, PACK_MAGIC};
pub use record::{load_tensor_pack, records_from_tensors, records_to_tensors, save_tensor_pack};
pub use record::{EmbeddingRecord, TokenGrid};
pub use vocab::{ClassEntry, ComponentEntry, ComponentVocabulary};

/// Norm deviation above which a stored embedding is rejected.
pub const NORM_REJECT_TOLERANCE: f64 = 1e-3;

/// How loaders treat embeddings whose norm is off by more than
/// [`NORM_REJECT_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormPolicy {
    #[default]
    Reject,
    Renormalize,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("{what}: norm {norm:.6} is not within {tolerance} of 1")]
    NormViolation { what: String, norm: f64, tolerance: f64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Key of a component embedding or mask inside a record: `"class/component"`.
pub fn component_key(class: &str, component: &str) -> String {
    format!("{class}/{component}")
}

/// Checks (and optionally repairs) the norm of one stored vector.
pub(crate) fn check_unit_norm(
    what: impl FnOnce() -> String,
    values: &mut [f32],
    policy: NormPolicy,
) -> Result<(), StoreError> {
    let norm = crate::vector::norm(values);
    if (norm - 1.0).abs() <= NORM_REJECT_TOLERANCE {
        return Ok(());
    }
    match policy {
        NormPolicy::Renormalize if norm > 0.0 && norm.is_finite() => {
            renormalize(values);
            Ok(())
        }
        _ => Err(StoreError::NormViolation {
            what: what(),
            norm,
            tolerance: NORM_REJECT_TOLERANCE,
        }),
    }
}

/// Rescales `values` to unit norm, computing in f64.
pub fn renormalize(values: &mut [f32]) {
    let norm = crate::vector::norm(values);
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
}

pub(crate) fn validate_name(kind: &str, name: &str) -> Result<(), StoreError> {
    if name.is_empty() || name.contains('/') {
        return Err(StoreError::Invariant(format!(
            "{kind} name {name:?} must be non-empty and must not contain '/'"
        )));
    }
    Ok(())
}
