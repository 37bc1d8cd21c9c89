use serde::{Deserialize, Serialize};

use super::pipeline::Scorer;
use super::report::{evaluate, EvalReport, ScoreField};
use super::EvalError;
use crate::compositional::{CcsParams, Coreset};
use crate::error::Error;
use crate::geometry::BlurSpec;
use crate::shift::{ScoreConfig, ScoreRecord, Variant};
use crate::store::{ComponentVocabulary, Dataset, Role};

/// Everything that determines a benchmark's numbers. Serialized into the
/// report so a run can be repeated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub alpha: f64,
    pub temperature: f64,
    pub variant: Variant,
    pub k: usize,
    pub mask_tau: f64,
    pub coreset_fraction: f64,
    pub tpr_target: f64,
    pub score_field: ScoreField,
    /// Background suppression used when the inputs were extracted.
    pub blur: BlurSpec,
    /// Seed of the data generator, when the inputs are synthetic.
    pub seed: Option<u64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let score = ScoreConfig::default();
        let params = CcsParams::default();
        BenchmarkConfig {
            alpha: score.alpha,
            temperature: score.temperature,
            variant: score.variant,
            k: params.k,
            mask_tau: params.mask_tau,
            coreset_fraction: 0.01,
            tpr_target: 0.95,
            score_field: ScoreField::Cood,
            blur: BlurSpec::default(),
            seed: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            alpha: self.alpha,
            temperature: self.temperature,
            variant: self.variant,
        }
    }

    pub fn ccs_params(&self) -> CcsParams {
        CcsParams {
            k: self.k,
            mask_tau: self.mask_tau,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.score_config().validate()?;
        self.ccs_params().validate()?;
        self.blur.validate()?;
        if !(self.coreset_fraction > 0.0 && self.coreset_fraction <= 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "coreset_fraction must lie in (0, 1], got {}",
                self.coreset_fraction
            ))
            .into());
        }
        if !(self.tpr_target > 0.0 && self.tpr_target <= 1.0) {
            return Err(
                EvalError::InvalidConfig(format!("tpr_target must lie in (0, 1], got {}", self.tpr_target)).into(),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub coreset: Option<Coreset>,
    pub id_scores: Vec<ScoreRecord>,
    pub ood_scores: Vec<(String, Vec<ScoreRecord>)>,
    pub report: EvalReport,
}

fn check_role(d: &Dataset, role: Role) -> Result<(), Error> {
    if d.role != role {
        return Err(Error::Config(format!(
            "dataset {:?} has role {:?}, expected {:?}",
            d.name, d.role, role
        )));
    }
    Ok(())
}

/// Builds the coreset, scores the ID test set and each OOD set, and reports
/// metrics. `threads == 0` uses the default pool size; the result does not
/// depend on the thread count.
pub fn run_benchmark(
    vocab: &ComponentVocabulary,
    id_train: &Dataset,
    id_test: &Dataset,
    ood_tests: &[Dataset],
    config: &BenchmarkConfig,
    threads: usize,
) -> Result<BenchmarkOutput, Error> {
    config.validate()?;
    check_role(id_train, Role::IdTrain)?;
    check_role(id_test, Role::IdTest)?;
    for d in ood_tests {
        check_role(d, Role::OodTest)?;
    }
    if ood_tests.is_empty() {
        return Err(Error::Config("at least one OOD test set is required".into()));
    }
    with_threads(threads, || {
        let params = config.ccs_params();
        let coreset = match config.variant {
            Variant::Full => Some(Coreset::build(id_train, vocab, &params, config.coreset_fraction)?),
            _ => None,
        };
        let scorer = Scorer::new(vocab, coreset.as_ref(), config.score_config(), params)?;
        let id_scores = scorer.score_all(&id_test.records)?;
        let ood_scores = ood_tests
            .iter()
            .map(|d| Ok((d.name.clone(), scorer.score_all(&d.records)?)))
            .collect::<Result<Vec<_>, Error>>()?;
        let mut report = evaluate(&id_scores, &ood_scores, config.score_field, config.tpr_target)?;
        report.config = Some(config.clone());
        Ok(BenchmarkOutput {
            coreset,
            id_scores,
            ood_scores,
            report,
        })
    })?
}

/// Runs `f` on a dedicated pool of `threads` workers (`0` picks the default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
