use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::compositional::{ccs, CcsParams, CompositionError, Coreset};
use crate::error::Error;
use crate::shift::{css, css_fast, fuse, mcm_score, ScoreConfig, ScoreRecord, Variant};
use crate::store::{ComponentVocabulary, EmbeddingRecord, StoreError};

/// Scores records against a vocabulary and, for the full variant, a coreset.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    vocab: &'a ComponentVocabulary,
    coreset: Option<&'a Coreset>,
    config: ScoreConfig,
    params: CcsParams,
}

impl<'a> Scorer<'a> {
    pub fn new(
        vocab: &'a ComponentVocabulary,
        coreset: Option<&'a Coreset>,
        config: ScoreConfig,
        params: CcsParams,
    ) -> Result<Self, Error> {
        config.validate()?;
        params.validate()?;
        if let Some(c) = coreset {
            c.check_vocabulary(vocab)?;
        }
        Ok(Scorer {
            vocab,
            coreset,
            config,
            params,
        })
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.config
    }

    pub fn score(&self, record: &EmbeddingRecord) -> Result<ScoreRecord, Error> {
        self.score_inner(record)
            .map_err(|e| Error::for_sample(&record.sample_id, e))
    }

    fn score_inner(&self, record: &EmbeddingRecord) -> Result<ScoreRecord, Error> {
        let t = self.config.temperature;
        let mcm = mcm_score(&record.global, self.vocab, t)?;
        let shift = match self.config.variant {
            Variant::Full => Some(css(&record.global, &record.components, self.vocab, t)?),
            Variant::Fast => Some(css_fast(&record.global, self.vocab, t)?),
            Variant::McmBaseline => None,
        };
        let comp = match (self.config.variant, self.coreset) {
            (Variant::Full, Some(coreset)) => match ccs(record, self.vocab, coreset, &self.params) {
                Ok(outcome) => Some(outcome),
                Err(CompositionError::NoUsableClass) => None,
                Err(e) => return Err(e.into()),
            },
            _ => None,
        };
        let css_score = shift.as_ref().map_or(mcm, |s| s.score);
        let ccs_score = comp.as_ref().map(|c| c.score);
        let argmax_class = match &shift {
            Some(s) => s.class.clone(),
            None => {
                let post = crate::shift::posterior(
                    &record.global,
                    &self
                        .vocab
                        .classes()
                        .iter()
                        .map(|c| c.class_embedding.as_slice())
                        .collect::<Vec<_>>(),
                    t,
                )?;
                let top = crate::vector::argmax(&post).expect("vocabulary is non-empty");
                self.vocab.classes()[top].name.clone()
            }
        };
        Ok(ScoreRecord {
            sample_id: record.sample_id.clone(),
            css: css_score,
            ccs: ccs_score,
            cood: fuse(css_score, ccs_score, self.config.alpha),
            mcm,
            argmax_class,
            ccs_class: comp.as_ref().map(|c| c.class.clone()),
            reference_id: comp.as_ref().map(|c| c.reference_id.clone()),
            mean_residual: comp.as_ref().map(|c| c.mean_residual),
            per_component_posterior: shift.map(|s| s.per_component).unwrap_or_default(),
        })
    }

    /// Scores every record in parallel; output is sorted by `sample_id`.
    pub fn score_all(&self, records: &[EmbeddingRecord]) -> Result<Vec<ScoreRecord>, Error> {
        let mut out: Vec<ScoreRecord> = records.par_iter().map(|r| self.score(r)).collect::<Result<_, _>>()?;
        out.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        Ok(out)
    }
}

/// Writes one JSON object per line.
pub fn write_scores(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<(), StoreError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| StoreError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        writeln!(out, "{}", r.to_json_line()).map_err(|e| StoreError::io(path, e))?;
    }
    out.flush().map_err(|e| StoreError::io(path, e))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>, StoreError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| StoreError::MalformedFile(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(record);
    }
    Ok(out)
}
