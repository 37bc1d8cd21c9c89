use rayon::prelude::*;

use super::affine::{estimate_affine, mean_residual, AffineTransform, PointPair};
use super::assignment::{match_keypoints, Assignment};
use super::coreset::{Coreset, CoresetEntry};
use super::keypoints::{keypoint_set, KeypointSet};
use super::{CcsParams, CompositionError};
use crate::store::{ComponentVocabulary, EmbeddingRecord};
use crate::vector::{argmax, cosine};

/// The best-registering reference for a query.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMatch {
    pub entry_index: usize,
    pub sample_id: String,
    pub assignment: Assignment,
    pub transform: AffineTransform,
    pub mean_residual: f64,
}

fn matched_positions(query: &KeypointSet, reference: &KeypointSet, assignment: &Assignment) -> Vec<PointPair> {
    assignment
        .pairs
        .iter()
        .map(|&(i, j)| (query.items[i].position, reference.items[j].position))
        .collect()
}

/// Matches the query against every entry, fits an affine map on the matched
/// positions, and keeps the entry with the smallest mean residual (ties go
/// to the smaller `sample_id`).
pub fn select_reference(query: &KeypointSet, entries: &[CoresetEntry]) -> Result<ReferenceMatch, CompositionError> {
    if entries.is_empty() {
        return Err(CompositionError::EmptyCoreset);
    }
    if query.is_empty() {
        return Err(CompositionError::EmptySet);
    }
    let candidates: Vec<ReferenceMatch> = entries
        .par_iter()
        .enumerate()
        .map(|(entry_index, entry)| {
            let reference = entry.as_keypoint_set(&query.source_class);
            let assignment = match_keypoints(query, &reference)?;
            let pairs = matched_positions(query, &reference, &assignment);
            let transform = estimate_affine(&pairs);
            Ok(ReferenceMatch {
                entry_index,
                sample_id: entry.sample_id.clone(),
                mean_residual: mean_residual(&transform, &pairs),
                assignment,
                transform,
            })
        })
        .collect::<Result<_, CompositionError>>()?;
    Ok(candidates
        .into_iter()
        .min_by(|a, b| {
            a.mean_residual
                .total_cmp(&b.mean_residual)
                .then_with(|| a.sample_id.cmp(&b.sample_id))
        })
        .expect("entries is non-empty"))
}

/// Consistency of one query against one class's references: mean over the
/// matched pairs of `exp(-|M(e_i) - e_j|^2) * cos(z_i, z_j)`.
pub fn class_consistency(
    query: &KeypointSet,
    entries: &[CoresetEntry],
) -> Result<(f64, ReferenceMatch), CompositionError> {
    let best = select_reference(query, entries)?;
    let reference = &entries[best.entry_index];
    let total: f64 = best
        .assignment
        .pairs
        .iter()
        .map(|&(i, j)| {
            let q = &query.items[i];
            let r = &reference.keypoints[j];
            let m = best.transform.apply(q.position);
            let d2 = (m[0] - r.position[0]).powi(2) + (m[1] - r.position[1]).powi(2);
            (-d2).exp() * cosine(&q.feature, &r.feature)
        })
        .sum();
    let score = total / best.assignment.pairs.len() as f64;
    Ok((score, best))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcsOutcome {
    pub score: f64,
    pub class_index: usize,
    pub class: String,
    pub reference_id: String,
    pub mean_residual: f64,
}

/// Compositional consistency score: the maximum class consistency over
/// classes with both keypoints in the sample and coreset references.
pub fn ccs(
    record: &EmbeddingRecord,
    vocab: &ComponentVocabulary,
    coreset: &Coreset,
    params: &CcsParams,
) -> Result<CcsOutcome, CompositionError> {
    params.validate()?;
    if record.tokens.is_none() || record.positions.is_none() {
        return Err(CompositionError::MissingTokens(record.sample_id.clone()));
    }
    let mut per_class: Vec<Option<(f64, ReferenceMatch)>> = Vec::with_capacity(vocab.len());
    for class in vocab.classes() {
        let entries = coreset.entries(&class.name);
        if class.global_only || entries.is_empty() {
            per_class.push(None);
            continue;
        }
        let query = keypoint_set(record, class, params)?;
        if query.is_empty() {
            per_class.push(None);
            continue;
        }
        per_class.push(Some(class_consistency(&query, entries)?));
    }
    let scores: Vec<f64> = per_class
        .iter()
        .map(|c| c.as_ref().map_or(f64::NEG_INFINITY, |c| c.0))
        .collect();
    let best = argmax(&scores)
        .filter(|&i| per_class[i].is_some())
        .ok_or(CompositionError::NoUsableClass)?;
    let (score, reference) = per_class.swap_remove(best).expect("checked above");
    Ok(CcsOutcome {
        score,
        class_index: best,
        class: vocab.classes()[best].name.clone(),
        reference_id: reference.sample_id,
        mean_residual: reference.mean_residual,
    })
}
