//! Farthest-point-sampled reference sets of in-distribution keypoints.

use std::collections::BTreeMap;
use std::path::Path;

use super::keypoints::{keypoint_set, Keypoint, KeypointSet};
use super::{CcsParams, CompositionError};
use crate::error::Error;
use crate::store::{check_unit_norm, read_tensors, write_tensors, ComponentVocabulary, Dataset, NormPolicy, Tensor};
use crate::vector::squared_distance;

/// One reference sample of a class.
#[derive(Debug, Clone, PartialEq)]
pub struct CoresetEntry {
    pub sample_id: String,
    /// Keypoints in stored order; `patch_index` is the row within the entry.
    pub keypoints: Vec<Keypoint>,
}

impl CoresetEntry {
    pub fn as_keypoint_set(&self, class: &str) -> KeypointSet {
        KeypointSet {
            items: self.keypoints.clone(),
            source_class: class.to_owned(),
        }
    }
}

/// Per-class reference entries, each class sorted by `sample_id`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coreset {
    classes: BTreeMap<String, Vec<CoresetEntry>>,
}

/// Number of references kept from `n` candidates: `ceil(fraction * n)`,
/// at least one. The small slack stops `0.07 * 100` rounding up to 8.
pub fn coreset_size(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Greedy farthest-point sampling.
///
/// The first pick is the row nearest the mean; each later pick maximises the
/// distance to the closest already-picked row. Ties go to the lower index.
/// Returns indices in selection order.
pub fn farthest_point_sampling<R, T>(features: &[R], count: usize) -> Vec<usize>
where
    R: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let n = features.len();
    let count = count.min(n);
    if count == 0 {
        return Vec::new();
    }
    let dim = features[0].as_ref().len();
    let mut mean = vec![0.0f64; dim];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f.as_ref()) {
            *m += v.into();
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let first = (0..n)
        .map(|i| squared_distance(features[i].as_ref(), &mean))
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |best, (i, d)| if d < best.1 { (i, d) } else { best },
        )
        .0;
    let mut picked = vec![first];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(features[i].as_ref(), features[first].as_ref()))
        .collect();
    let mut taken = vec![false; n];
    taken[first] = true;
    while picked.len() < count {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if nearest[i] <= nearest[b] => {}
                _ => best = Some(i),
            }
        }
        let next = best.expect("count <= n leaves a candidate");
        taken[next] = true;
        picked.push(next);
        for i in 0..n {
            let d = squared_distance(features[i].as_ref(), features[next].as_ref());
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    picked
}

impl Coreset {
    /// Builds a coreset from validated per-class entries.
    pub fn new(classes: BTreeMap<String, Vec<CoresetEntry>>) -> Result<Self, CompositionError> {
        let mut classes = classes;
        for (class, entries) in classes.iter_mut() {
            entries.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
            if let Some(w) = entries.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
                return Err(CompositionError::InvalidCoreset(format!(
                    "duplicate entry {class}/{}",
                    w[0].sample_id
                )));
            }
            for e in entries.iter() {
                if e.keypoints.is_empty() {
                    return Err(CompositionError::InvalidCoreset(format!(
                        "{class}/{} has no keypoints",
                        e.sample_id
                    )));
                }
                let dim = e.keypoints[0].feature.len();
                for kp in &e.keypoints {
                    if kp.feature.len() != dim || !kp.position.iter().all(|v| v.is_finite()) {
                        return Err(CompositionError::InvalidCoreset(format!(
                            "{class}/{}: inconsistent keypoint",
                            e.sample_id
                        )));
                    }
                }
            }
        }
        classes.retain(|_, entries| !entries.is_empty());
        Ok(Coreset { classes })
    }

    /// Entries of `class`; empty when the class has none.
    pub fn entries(&self, class: &str) -> &[CoresetEntry] {
        self.classes.get(class).map_or(&[], Vec::as_slice)
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    /// Total number of entries over all classes.
    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Every class key must name a vocabulary class.
    pub fn check_vocabulary(&self, vocab: &ComponentVocabulary) -> Result<(), CompositionError> {
        match self.classes.keys().find(|c| vocab.class_index(c).is_none()) {
            Some(c) => Err(CompositionError::InvalidCoreset(format!(
                "class {c:?} is not in the vocabulary"
            ))),
            None => Ok(()),
        }
    }

    /// Selects `ceil(fraction * n_y)` references per class by farthest-point
    /// sampling on global features. Candidates are the labelled training
    /// samples with at least one keypoint, in `sample_id` order.
    pub fn build(
        train: &Dataset,
        vocab: &ComponentVocabulary,
        params: &CcsParams,
        fraction: f64,
    ) -> Result<Self, Error> {
        params.validate()?;
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(CompositionError::InvalidParameter(format!(
                "coreset fraction must lie in (0, 1], got {fraction}"
            ))
            .into());
        }
        let mut records: Vec<_> = train.records.iter().collect();
        records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        type Candidate<'r> = (&'r str, &'r [f32], KeypointSet);
        let mut candidates: BTreeMap<&str, Vec<Candidate>> = BTreeMap::new();
        for record in records {
            let id = record.sample_id.as_str();
            let label = train
                .label(id)
                .ok_or_else(|| CompositionError::UnlabeledSample(id.to_owned()))?;
            let class = vocab.class(label).ok_or_else(|| CompositionError::UnknownLabel {
                sample_id: id.to_owned(),
                label: label.to_owned(),
            })?;
            if class.global_only {
                continue;
            }
            let set = keypoint_set(record, class, params).map_err(|e| Error::for_sample(id, e))?;
            if !set.is_empty() {
                candidates
                    .entry(class.name.as_str())
                    .or_default()
                    .push((id, record.global.as_slice(), set));
            }
        }
        let mut classes = BTreeMap::new();
        for class in vocab.classes().iter().filter(|c| !c.global_only) {
            let pool = candidates
                .remove(class.name.as_str())
                .ok_or_else(|| CompositionError::EmptyClass(class.name.clone()))?;
            let features: Vec<&[f32]> = pool.iter().map(|c| c.1).collect();
            let picks = farthest_point_sampling(&features, coreset_size(pool.len(), fraction));
            let entries = picks
                .into_iter()
                .map(|i| {
                    let (id, _, set) = &pool[i];
                    CoresetEntry {
                        sample_id: (*id).to_owned(),
                        keypoints: set
                            .items
                            .iter()
                            .enumerate()
                            .map(|(row, kp)| Keypoint {
                                patch_index: row,
                                ..kp.clone()
                            })
                            .collect(),
                    }
                })
                .collect();
            classes.insert(class.name.clone(), entries);
        }
        Ok(Coreset::new(classes)?)
    }

    /// Tensor entries `class/sampleId/kp_features` `[K, D]` and
    /// `class/sampleId/kp_positions` `[K, 2]`.
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (class, entries) in &self.classes {
            for e in entries {
                let k = e.keypoints.len() as u64;
                let dim = e.keypoints[0].feature.len() as u64;
                out.push((
                    format!("{class}/{}/kp_features", e.sample_id),
                    Tensor::new(
                        vec![k, dim],
                        e.keypoints.iter().flat_map(|kp| kp.feature.iter().copied()).collect(),
                    ),
                ));
                out.push((
                    format!("{class}/{}/kp_positions", e.sample_id),
                    Tensor::new(
                        vec![k, 2],
                        e.keypoints
                            .iter()
                            .flat_map(|kp| [kp.position[0] as f32, kp.position[1] as f32])
                            .collect(),
                    ),
                ));
            }
        }
        out
    }

    pub fn from_tensors(entries: Vec<(String, Tensor)>, policy: NormPolicy) -> Result<Self, CompositionError> {
        let bad = |name: &str, msg: &str| CompositionError::InvalidCoreset(format!("{name:?}: {msg}"));
        type Parts = (Option<Tensor>, Option<Tensor>);
        let mut parts: BTreeMap<(String, String), Parts> = BTreeMap::new();
        for (name, tensor) in entries {
            let mut it = name.splitn(3, '/');
            let (Some(class), Some(id), Some(field)) = (it.next(), it.next(), it.next()) else {
                return Err(bad(&name, "expected class/sampleId/field"));
            };
            if tensor.dims.len() != 2 {
                return Err(bad(&name, "keypoint tensors must be rank 2"));
            }
            let slot = parts.entry((class.to_owned(), id.to_owned())).or_default();
            match field {
                "kp_features" => slot.0 = Some(tensor),
                "kp_positions" if tensor.dims[1] == 2 => slot.1 = Some(tensor),
                "kp_positions" => return Err(bad(&name, "positions must have shape (K, 2)")),
                _ => return Err(bad(&name, "unknown field")),
            }
        }
        let mut classes: BTreeMap<String, Vec<CoresetEntry>> = BTreeMap::new();
        for ((class, id), (features, positions)) in parts {
            let (Some(mut features), Some(positions)) = (features, positions) else {
                return Err(bad(&format!("{class}/{id}"), "needs both kp_features and kp_positions"));
            };
            let k = features.dims[0] as usize;
            let dim = features.dims[1] as usize;
            if positions.dims[0] as usize != k || k == 0 || dim == 0 {
                return Err(bad(&format!("{class}/{id}"), "keypoint counts disagree or are zero"));
            }
            for (row, chunk) in features.data.chunks_exact_mut(dim).enumerate() {
                check_unit_norm(|| format!("{class}/{id}/kp_features[{row}]"), chunk, policy)?;
            }
            let keypoints = features
                .data
                .chunks_exact(dim)
                .zip(positions.data.chunks_exact(2))
                .enumerate()
                .map(|(row, (f, p))| Keypoint {
                    patch_index: row,
                    feature: f.to_vec(),
                    position: [f64::from(p[0]), f64::from(p[1])],
                })
                .collect();
            classes.entry(class).or_default().push(CoresetEntry {
                sample_id: id,
                keypoints,
            });
        }
        Coreset::new(classes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CompositionError> {
        Ok(write_tensors(path, &self.to_tensors())?)
    }

    pub fn load(path: impl AsRef<Path>, policy: NormPolicy) -> Result<Self, CompositionError> {
        Self::from_tensors(read_tensors(path)?, policy)
    }
}
