//! Class posterior, component shift score (full and fast), the MCM
//! baseline and score fusion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::store::{component_key, ComponentVocabulary};
use crate::vector::{argmax, cosine, softmax};

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("no classes to score against")]
    EmptyClassSet,
    #[error("missing component embedding {class}/{component}")]
    MissingComponentEmbedding { class: String, component: String },
    #[error("invalid score configuration: {0}")]
    InvalidConfig(String),
}

/// Which shift score feeds the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Per-component visual features plus the compositional score.
    #[default]
    Full,
    /// Global feature against component texts; no compositional term.
    Fast,
    /// Maximum posterior only.
    McmBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub alpha: f64,
    pub temperature: f64,
    pub variant: Variant,
}

/// Fusion weight tuned for coarse-grained class sets.
pub const ALPHA_COARSE: f64 = 0.5;
/// Fusion weight tuned for fine-grained class sets.
pub const ALPHA_FINE: f64 = 0.2;

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            alpha: ALPHA_COARSE,
            temperature: 1.0,
            variant: Variant::Full,
        }
    }
}

impl ScoreConfig {
    pub fn fine_grained() -> Self {
        ScoreConfig {
            alpha: ALPHA_FINE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ScoreError::InvalidConfig(format!(
                "alpha must be a non-negative number, got {}",
                self.alpha
            )));
        }
        validate_temperature(self.temperature)
    }
}

fn validate_temperature(t: f64) -> Result<(), ScoreError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(ScoreError::InvalidConfig(format!(
            "temperature must be positive, got {t}"
        )))
    }
}

/// Softmax over cosine similarities between `z` and each class text.
pub fn posterior<Z, E, T>(z: &[Z], class_embeddings: &[E], temperature: f64) -> Result<Vec<f64>, ScoreError>
where
    Z: Copy + Into<f64>,
    E: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    if class_embeddings.is_empty() {
        return Err(ScoreError::EmptyClassSet);
    }
    validate_temperature(temperature)?;
    let sims: Vec<f64> = class_embeddings.iter().map(|t| cosine(z, t.as_ref())).collect();
    Ok(softmax(&sims, temperature))
}

fn vocab_posterior<Z: Copy + Into<f64>>(
    z: &[Z],
    vocab: &ComponentVocabulary,
    temperature: f64,
) -> Result<Vec<f64>, ScoreError> {
    let texts: Vec<&[f32]> = vocab.classes().iter().map(|c| c.class_embedding.as_slice()).collect();
    posterior(z, &texts, temperature)
}

/// Result of a shift-score evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CssOutcome {
    pub score: f64,
    pub class_index: usize,
    pub class: String,
    /// Within-class component softmax of the winning class, keyed `class/component`.
    pub per_component: BTreeMap<String, f64>,
}

/// Per-class term: posterior times the mean within-class component softmax.
/// `sims[p][q]` is the similarity of visual feature `p` with text `q`.
fn class_term(post: f64, sims: &[Vec<f64>], temperature: f64) -> (f64, Vec<f64>) {
    let presence: Vec<f64> = sims
        .iter()
        .enumerate()
        .map(|(p, row)| softmax(row, temperature)[p])
        .collect();
    let mean = presence.iter().sum::<f64>() / presence.len() as f64;
    (post * mean, presence)
}

fn best_outcome(vocab: &ComponentVocabulary, terms: Vec<Option<(f64, Vec<f64>)>>) -> Option<CssOutcome> {
    let scores: Vec<f64> = terms
        .iter()
        .map(|t| t.as_ref().map_or(f64::NEG_INFINITY, |t| t.0))
        .collect();
    let best = argmax(&scores).filter(|&i| terms[i].is_some())?;
    let (score, presence) = terms.into_iter().nth(best).flatten()?;
    let class = &vocab.classes()[best];
    Some(CssOutcome {
        score,
        class_index: best,
        class: class.name.clone(),
        per_component: class.component_keys().zip(presence).collect(),
    })
}

/// Component shift score from per-component visual features.
///
/// Classes lacking one of their component features are skipped, unless the
/// class is the posterior argmax, in which case the score is undefined and
/// the missing component is reported.
pub fn css<Z: Copy + Into<f64>>(
    z: &[Z],
    components: &BTreeMap<String, Vec<f32>>,
    vocab: &ComponentVocabulary,
    temperature: f64,
) -> Result<CssOutcome, ScoreError> {
    let post = vocab_posterior(z, vocab, temperature)?;
    let top = argmax(&post).ok_or(ScoreError::EmptyClassSet)?;
    let mut terms = Vec::with_capacity(vocab.len());
    for (y, class) in vocab.classes().iter().enumerate() {
        if class.global_only {
            terms.push(Some((post[y], Vec::new())));
            continue;
        }
        let features: Option<Vec<&Vec<f32>>> = class.component_keys().map(|key| components.get(&key)).collect();
        match features {
            Some(features) => {
                let sims: Vec<Vec<f64>> = features
                    .iter()
                    .map(|f| class.components.iter().map(|t| cosine(f, &t.embedding)).collect())
                    .collect();
                terms.push(Some(class_term(post[y], &sims, temperature)));
            }
            None if y == top => {
                let missing = class
                    .components
                    .iter()
                    .find(|c| !components.contains_key(&component_key(&class.name, &c.name)))
                    .expect("some component is missing");
                return Err(ScoreError::MissingComponentEmbedding {
                    class: class.name.clone(),
                    component: missing.name.clone(),
                });
            }
            None => terms.push(None),
        }
    }
    Ok(best_outcome(vocab, terms).expect("the posterior argmax class is always scored"))
}

/// Fast shift score: the global feature stands in for every component feature.
pub fn css_fast<Z: Copy + Into<f64>>(
    z: &[Z],
    vocab: &ComponentVocabulary,
    temperature: f64,
) -> Result<CssOutcome, ScoreError> {
    let post = vocab_posterior(z, vocab, temperature)?;
    let terms = vocab
        .classes()
        .iter()
        .enumerate()
        .map(|(y, class)| {
            if class.global_only {
                return Some((post[y], Vec::new()));
            }
            let row: Vec<f64> = class.components.iter().map(|t| cosine(z, &t.embedding)).collect();
            let sims = vec![row; class.components.len()];
            Some(class_term(post[y], &sims, temperature))
        })
        .collect();
    Ok(best_outcome(vocab, terms).expect("every class is scored"))
}

/// Maximum class posterior.
pub fn mcm_score<Z: Copy + Into<f64>>(
    z: &[Z],
    vocab: &ComponentVocabulary,
    temperature: f64,
) -> Result<f64, ScoreError> {
    let post = vocab_posterior(z, vocab, temperature)?;
    Ok(post.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// `css + alpha * ccs`, or `css` when there is no compositional score.
pub fn fuse(css: f64, ccs: Option<f64>, alpha: f64) -> f64 {
    match ccs {
        Some(ccs) => css + alpha * ccs,
        None => css,
    }
}

/// Rounds to 9 significant digits for stable, compact text output.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig9(*x))
}

fn ser_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(x) => s.serialize_some(&round_sig9(*x)),
        None => s.serialize_none(),
    }
}

fn ser_map_f64<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(k, &round_sig9(*v))?;
    }
    map.end()
}

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    #[serde(serialize_with = "ser_f64")]
    pub css: f64,
    #[serde(serialize_with = "ser_opt_f64")]
    pub ccs: Option<f64>,
    #[serde(serialize_with = "ser_f64")]
    pub cood: f64,
    #[serde(serialize_with = "ser_f64")]
    pub mcm: f64,
    pub argmax_class: String,
    pub ccs_class: Option<String>,
    pub reference_id: Option<String>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub mean_residual: Option<f64>,
    #[serde(serialize_with = "ser_map_f64")]
    pub per_component_posterior: BTreeMap<String, f64>,
}

impl ScoreRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("score record serializes")
    }
}
