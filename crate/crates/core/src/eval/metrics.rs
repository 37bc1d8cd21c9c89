//! Threshold-free and fixed-TPR detection metrics. Higher scores mean
//! "more in-distribution".

use super::EvalError;

fn check(id: &[f64], ood: &[f64]) -> Result<(), EvalError> {
    if id.is_empty() || ood.is_empty() {
        return Err(EvalError::EmptyScoreList);
    }
    if let Some(bad) = id.iter().chain(ood).find(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(*bad));
    }
    Ok(())
}

/// Twice the Mann-Whitney count: 2 for each ID score above an OOD score,
/// 1 for each tie.
pub fn doubled_pair_count(id: &[f64], ood: &[f64]) -> u64 {
    let mut sorted = ood.to_vec();
    sorted.sort_by(f64::total_cmp);
    id.iter()
        .map(|&s| {
            let below = sorted.partition_point(|&o| o < s);
            let not_above = sorted.partition_point(|&o| o <= s);
            (2 * below + (not_above - below)) as u64
        })
        .sum()
}

/// Area under the ROC curve: the probability that a random ID score beats a
/// random OOD score, ties counting one half.
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64, EvalError> {
    check(id, ood)?;
    let pairs = 2 * id.len() as u64 * ood.len() as u64;
    Ok(doubled_pair_count(id, ood) as f64 / pairs as f64)
}

/// Fraction of OOD scores accepted at the largest threshold `t` that still
/// accepts (`score > t`) at least `tpr_target` of the ID scores.
pub fn fpr_at_tpr(id: &[f64], ood: &[f64], tpr_target: f64) -> Result<f64, EvalError> {
    check(id, ood)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(EvalError::InvalidConfig(format!(
            "tpr target must lie in (0, 1], got {tpr_target}"
        )));
    }
    let mut sorted = id.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    let k = (1..=n).find(|&k| k as f64 / n as f64 >= tpr_target).unwrap_or(n);
    // Any threshold just below the k-th highest ID score keeps k of them.
    let cut = sorted[k - 1];
    let accepted = ood.iter().filter(|&&o| o >= cut).count();
    Ok(accepted as f64 / ood.len() as f64)
}
