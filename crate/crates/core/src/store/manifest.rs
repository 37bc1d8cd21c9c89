use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{load_tensor_pack, EmbeddingRecord};
use super::{ComponentVocabulary, NormPolicy, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    IdTrain,
    IdTest,
    OodTest,
}

/// On-disk manifest: which packs make up a dataset split, plus labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub role: Role,
    pub name: String,
    /// Tensor-pack paths, relative to the manifest file.
    pub packs: Vec<PathBuf>,
    /// sample_id -> class name; required for every record when `role = id_train`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| StoreError::MalformedFile(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| StoreError::io(path, e))
    }
}

/// A manifest with its packs resolved into records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub role: Role,
    pub name: String,
    pub records: Vec<EmbeddingRecord>,
    pub labels: BTreeMap<String, String>,
}

impl Dataset {
    /// Loads a manifest and every pack it references.
    pub fn load(manifest_path: impl AsRef<Path>, policy: NormPolicy) -> Result<Self, StoreError> {
        let manifest_path = manifest_path.as_ref();
        let manifest = DatasetManifest::load(manifest_path)?;
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let mut records = Vec::new();
        for pack in &manifest.packs {
            records.extend(load_tensor_pack(base.join(pack), policy)?);
        }
        Ok(Dataset {
            role: manifest.role,
            name: manifest.name,
            records,
            labels: manifest.labels,
        })
    }

    pub fn label(&self, sample_id: &str) -> Option<&str> {
        self.labels.get(sample_id).map(String::as_str)
    }
}

/// A data-quality problem found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Finding {
    DuplicateId {
        sample_id: String,
    },
    UnknownClass {
        sample_id: String,
        label: String,
    },
    MissingLabel {
        sample_id: String,
    },
    OrphanLabel {
        sample_id: String,
    },
    DimensionMismatch {
        sample_id: String,
        expected: usize,
        found: usize,
    },
    UnknownComponent {
        sample_id: String,
        key: String,
    },
    InvalidRecord {
        sample_id: String,
        reason: String,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateId { sample_id } => write!(f, "{sample_id}: duplicate sample_id"),
            Finding::UnknownClass { sample_id, label } => {
                write!(f, "{sample_id}: label {label:?} is not in the vocabulary")
            }
            Finding::MissingLabel { sample_id } => write!(f, "{sample_id}: training record without label"),
            Finding::OrphanLabel { sample_id } => write!(f, "{sample_id}: label for a missing record"),
            Finding::DimensionMismatch {
                sample_id,
                expected,
                found,
            } => write!(f, "{sample_id}: dimension {found}, vocabulary has {expected}"),
            Finding::UnknownComponent { sample_id, key } => {
                write!(f, "{sample_id}: component {key:?} is not in the vocabulary")
            }
            Finding::InvalidRecord { sample_id, reason } => write!(f, "{sample_id}: {reason}"),
        }
    }
}

/// Cross-checks a dataset against a vocabulary. An empty result means every
/// record resolves, every label exists, and all record invariants hold.
pub fn validate_manifest(dataset: &Dataset, vocab: &ComponentVocabulary) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut seen = BTreeSet::new();
    let known_keys: BTreeSet<String> = vocab.classes().iter().flat_map(|c| c.component_keys()).collect();
    for record in &dataset.records {
        let id = &record.sample_id;
        if !seen.insert(id.as_str()) {
            findings.push(Finding::DuplicateId { sample_id: id.clone() });
        }
        if record.dim() != vocab.dim() {
            findings.push(Finding::DimensionMismatch {
                sample_id: id.clone(),
                expected: vocab.dim(),
                found: record.dim(),
            });
        }
        for key in record.components.keys().chain(record.masks.keys()) {
            if !known_keys.contains(key) {
                findings.push(Finding::UnknownComponent {
                    sample_id: id.clone(),
                    key: key.clone(),
                });
            }
        }
        let mut copy = record.clone();
        if let Err(e) = copy.validate(NormPolicy::Reject) {
            findings.push(Finding::InvalidRecord {
                sample_id: id.clone(),
                reason: e.to_string(),
            });
        }
        match dataset.labels.get(id) {
            Some(label) if vocab.class_index(label).is_none() => findings.push(Finding::UnknownClass {
                sample_id: id.clone(),
                label: label.clone(),
            }),
            None if dataset.role == Role::IdTrain => findings.push(Finding::MissingLabel { sample_id: id.clone() }),
            _ => {}
        }
    }
    for id in dataset.labels.keys() {
        if !seen.contains(id.as_str()) {
            findings.push(Finding::OrphanLabel { sample_id: id.clone() });
        }
    }
    findings.sort();
    findings.dedup();
    findings
}
