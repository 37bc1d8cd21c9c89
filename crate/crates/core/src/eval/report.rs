use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::benchmark::BenchmarkConfig;
use super::metrics::{auroc, fpr_at_tpr};
use super::EvalError;
use crate::shift::ScoreRecord;

/// Score orientation recorded in every report.
pub const ORIENTATION: &str = "higher_is_in_distribution";

/// Which column of a score record is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreField {
    #[default]
    Cood,
    Css,
    Ccs,
    Mcm,
}

impl ScoreField {
    pub fn name(self) -> &'static str {
        match self {
            ScoreField::Cood => "cood",
            ScoreField::Css => "css",
            ScoreField::Ccs => "ccs",
            ScoreField::Mcm => "mcm",
        }
    }

    pub fn extract(self, record: &ScoreRecord) -> Result<f64, EvalError> {
        match self {
            ScoreField::Cood => Ok(record.cood),
            ScoreField::Css => Ok(record.css),
            ScoreField::Mcm => Ok(record.mcm),
            ScoreField::Ccs => record.ccs.ok_or_else(|| EvalError::MissingScore {
                sample_id: record.sample_id.clone(),
                field: "ccs".into(),
            }),
        }
    }
}

impl fmt::Display for ScoreField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreField {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cood" => Ok(ScoreField::Cood),
            "css" => Ok(ScoreField::Css),
            "ccs" => Ok(ScoreField::Ccs),
            "mcm" => Ok(ScoreField::Mcm),
            other => Err(EvalError::InvalidConfig(format!("unknown score field {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub auroc: f64,
    pub fpr_at_tpr: f64,
    pub tpr_target: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub orientation: String,
    pub score_field: ScoreField,
    pub tpr_target: f64,
    pub per_ood_set: BTreeMap<String, SetMetrics>,
    pub macro_auroc: f64,
    pub macro_fpr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<BenchmarkConfig>,
}

impl EvalReport {
    pub fn to_json_pretty(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

fn column(records: &[ScoreRecord], field: ScoreField) -> Result<Vec<f64>, EvalError> {
    records.iter().map(|r| field.extract(r)).collect()
}

/// Metrics of each `(ID, OOD set)` pair and their unweighted means.
pub fn evaluate(
    id: &[ScoreRecord],
    ood_sets: &[(String, Vec<ScoreRecord>)],
    field: ScoreField,
    tpr_target: f64,
) -> Result<EvalReport, EvalError> {
    if ood_sets.is_empty() {
        return Err(EvalError::EmptyScoreList);
    }
    let id_scores = column(id, field)?;
    let mut per_ood_set = BTreeMap::new();
    for (name, records) in ood_sets {
        let ood_scores = column(records, field)?;
        let metrics = SetMetrics {
            auroc: auroc(&id_scores, &ood_scores)?,
            fpr_at_tpr: fpr_at_tpr(&id_scores, &ood_scores, tpr_target)?,
            tpr_target,
            n_id: id_scores.len(),
            n_ood: ood_scores.len(),
        };
        if per_ood_set.insert(name.clone(), metrics).is_some() {
            return Err(EvalError::InvalidConfig(format!("duplicate OOD set name {name:?}")));
        }
    }
    let count = per_ood_set.len() as f64;
    let macro_auroc = per_ood_set.values().map(|m| m.auroc).sum::<f64>() / count;
    let macro_fpr = per_ood_set.values().map(|m| m.fpr_at_tpr).sum::<f64>() / count;
    Ok(EvalReport {
        orientation: ORIENTATION.into(),
        score_field: field,
        tpr_target,
        per_ood_set,
        macro_auroc,
        macro_fpr,
        config: None,
    })
}
