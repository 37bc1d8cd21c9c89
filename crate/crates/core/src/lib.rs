//! Training-free component-based out-of-distribution scoring.
//!
//! The engine consumes precomputed vision-language embeddings (global image
//! features, per-component features, patch tokens, token-grid masks) and a
//! component vocabulary, and produces per-sample scores:
//!
//! * a component shift score ([`shift::css`]) weighting the class posterior by
//!   how strongly each of the class's components is recognised,
//! * a compositional consistency score ([`compositional::ccs`]) measuring how
//!   well the sample's component keypoints register, under an affine map,
//!   against a coreset of in-distribution references,
//! * their fusion ([`shift::fuse`]).
//!
//! Supporting modules cover mask processing ([`geometry`]), file formats
//! ([`store`]), detection metrics and the benchmark runner ([`eval`]), and the
//! binomial/normal false-positive-rate analysis ([`theory`]).

pub mod compositional;
pub mod eval;
pub mod geometry;
pub mod shift;
pub mod store;
pub mod theory;

mod error;
mod vector;

pub use compositional::{
    ccs, estimate_affine, match_keypoints, select_keypoints, select_reference, AffineTransform, Assignment, CcsParams,
    Coreset, CoresetEntry, Keypoint, KeypointSet,
};
pub use error::{Error, ErrorKind};
pub use eval::{auroc, fpr_at_tpr, run_benchmark, synth_world, BenchmarkConfig, EvalReport};
pub use geometry::{BlurSpec, MaskGrid, MaskKind};
pub use shift::{css, css_fast, fuse, mcm_score, posterior, ScoreConfig, ScoreRecord, Variant};
pub use store::{ComponentVocabulary, Dataset, DatasetManifest, EmbeddingRecord, NormPolicy, Role, TokenGrid};
pub use theory::{BernoulliComponentModel, GaussianScorePair};

pub type Result<T, E = Error> = std::result::Result<T, E>;
