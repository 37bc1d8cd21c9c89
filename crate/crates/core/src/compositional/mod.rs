//! Compositional consistency: keypoints, optimal matching, affine
//! registration against coreset references, and the consistency score.

mod affine;
mod assignment;
mod consistency;
mod coreset;
mod keypoints;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::StoreError;

pub use affine::{classify_pairs, estimate_affine, mean_residual, AffineTransform, FitKind, PointPair};
pub use assignment::{match_keypoints, solve_assignment, Assignment, ASSIGNMENT_TIE_TOLERANCE};
pub use consistency::{ccs, class_consistency, select_reference, CcsOutcome, ReferenceMatch};
pub use coreset::{coreset_size, farthest_point_sampling, Coreset, CoresetEntry};
pub use keypoints::{keypoint_set, nearest_eligible, select_keypoints, Keypoint, KeypointSet};

#[derive(Debug, Error)]
pub enum CompositionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot match an empty keypoint set")]
    EmptySet,
    #[error("class coreset is empty")]
    EmptyCoreset,
    #[error("class {0:?} has no usable training sample for the coreset")]
    EmptyClass(String),
    #[error("no class has both keypoints and coreset references")]
    NoUsableClass,
    #[error("sample {0:?} has no token grid or positions")]
    MissingTokens(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training sample {0:?} has no label")]
    UnlabeledSample(String),
    #[error("training sample {sample_id:?} is labelled {label:?}, which is not in the vocabulary")]
    UnknownLabel { sample_id: String, label: String },
    #[error("invalid coreset: {0}")]
    InvalidCoreset(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Keypoint selection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcsParams {
    /// Keypoints kept per component.
    pub k: usize,
    /// Strict mask threshold for patch eligibility.
    pub mask_tau: f64,
}

impl Default for CcsParams {
    fn default() -> Self {
        CcsParams { k: 4, mask_tau: 0.5 }
    }
}

impl CcsParams {
    pub fn validate(&self) -> Result<(), CompositionError> {
        if self.k == 0 {
            return Err(CompositionError::InvalidParameter("k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.mask_tau) {
            return Err(CompositionError::InvalidParameter(format!(
                "mask_tau must lie in [0, 1), got {}",
                self.mask_tau
            )));
        }
        Ok(())
    }
}
