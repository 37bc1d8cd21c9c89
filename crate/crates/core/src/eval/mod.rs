//! Detection metrics, score files, the per-sample scoring pipeline, the
//! end-to-end benchmark runner and the synthetic world generator.

mod benchmark;
mod metrics;
mod pipeline;
mod report;
mod synth;

use thiserror::Error;

pub use benchmark::{run_benchmark, with_threads, BenchmarkConfig, BenchmarkOutput};
pub use metrics::{auroc, doubled_pair_count, fpr_at_tpr};
pub use pipeline::{read_scores, write_scores, Scorer};
pub use report::{evaluate, EvalReport, ScoreField, SetMetrics, ORIENTATION};
pub use synth::{synth_world, SynthConfig, SynthWorld, WorldFiles};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("score list is empty")]
    EmptyScoreList,
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("sample {sample_id}: no {field} score")]
    MissingScore { sample_id: String, field: String },
    #[error("invalid evaluation configuration: {0}")]
    InvalidConfig(String),
}
