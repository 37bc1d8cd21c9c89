use std::collections::BTreeSet;

use super::{CcsParams, CompositionError};
use crate::geometry::binarize_mask;
use crate::store::{component_key, ClassEntry, EmbeddingRecord, TokenGrid};
use crate::vector::squared_distance;

/// A selected patch: its index on the token grid, token feature and centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub patch_index: usize,
    pub feature: Vec<f32>,
    pub position: [f64; 2],
}

/// Keypoints of one sample for one class, sorted by patch index.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub items: Vec<Keypoint>,
    pub source_class: String,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.items.iter().map(|k| k.position)
    }
}

/// The `k` eligible indices with the smallest distance, nearest first;
/// equal distances keep the lower index first.
pub fn nearest_eligible(distances: &[f64], eligible: &[usize], k: usize) -> Vec<usize> {
    let mut ranked: Vec<usize> = eligible.to_vec();
    ranked.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    ranked.truncate(k);
    ranked
}

/// Keypoints of one component: the `k` eligible patches whose tokens are
/// closest to the component feature.
pub fn select_keypoints(
    tokens: &TokenGrid,
    positions: &[[f32; 2]],
    component_feature: &[f32],
    eligible: &[usize],
    k: usize,
) -> Vec<Keypoint> {
    let mut distances = vec![f64::INFINITY; tokens.len()];
    for &i in eligible {
        distances[i] = squared_distance(tokens.row(i), component_feature);
    }
    nearest_eligible(&distances, eligible, k)
        .into_iter()
        .map(|i| Keypoint {
            patch_index: i,
            feature: tokens.row(i).to_vec(),
            position: [f64::from(positions[i][0]), f64::from(positions[i][1])],
        })
        .collect()
}

/// Union of the per-component keypoints of `class` in `record`.
///
/// Components without a feature or a mask contribute nothing; the result
/// may be empty.
pub fn keypoint_set(
    record: &EmbeddingRecord,
    class: &ClassEntry,
    params: &CcsParams,
) -> Result<KeypointSet, CompositionError> {
    let (Some(tokens), Some(positions)) = (&record.tokens, &record.positions) else {
        return Err(CompositionError::MissingTokens(record.sample_id.clone()));
    };
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for component in &class.components {
        let key = component_key(&class.name, &component.name);
        let (Some(feature), Some(mask)) = (record.components.get(&key), record.masks.get(&key)) else {
            continue;
        };
        let eligible = binarize_mask(mask, params.mask_tau);
        for kp in select_keypoints(tokens, positions, feature, &eligible, params.k) {
            if seen.insert(kp.patch_index) {
                items.push(kp);
            }
        }
    }
    items.sort_by_key(|k| k.patch_index);
    Ok(KeypointSet {
        items,
        source_class: class.name.clone(),
    })
}
