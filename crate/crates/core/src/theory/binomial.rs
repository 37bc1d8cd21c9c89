//! Exact binomial tails, integer thresholds and the component-count recursion.

use super::{check_lambda, BernoulliComponentModel, TheoryError};

/// A tail within this distance above the target still counts as meeting it.
pub const TAIL_EPS: f64 = 1e-12;
/// Largest disagreement tolerated between the closed-form and direct deltas.
pub const DELTA_TOLERANCE: f64 = 1e-12;
/// Above this many components coefficients are taken in the log domain.
const LOG_DOMAIN_ABOVE: u32 = 500;

/// How the integer score threshold is derived from the target rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    /// Smallest `t >= 0` whose in-distribution tail `P(S > t)` is at most λ.
    #[default]
    TailAtMost,
    /// Largest `t >= -1` whose in-distribution tail is at least λ (the usual
    /// "TPR ≥ λ" reading).
    TprAtLeast,
}

/// `P(S = k)` for `S ~ Binomial(n, p)`; zero outside `0..=n`.
pub fn binomial_pmf(n: u32, p: f64, k: i64) -> f64 {
    if k < 0 || k > i64::from(n) {
        return 0.0;
    }
    let k = k as u32;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if n > LOG_DOMAIN_ABOVE {
        let ln_coeff =
            libm::lgamma(f64::from(n) + 1.0) - libm::lgamma(f64::from(k) + 1.0) - libm::lgamma(f64::from(n - k) + 1.0);
        return (ln_coeff + f64::from(k) * p.ln() + f64::from(n - k) * (-p).ln_1p()).exp();
    }
    let small = k.min(n - k);
    let mut coeff = 1.0f64;
    for i in 0..small {
        coeff = coeff * f64::from(n - i) / f64::from(i + 1);
    }
    coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// `P(S > t)`, summed over the lighter side and complemented if needed.
pub fn binomial_tail(n: u32, p: f64, t: i64) -> f64 {
    if t < 0 {
        return 1.0;
    }
    if t >= i64::from(n) {
        return 0.0;
    }
    let mean = f64::from(n) * p;
    let tail = if (t + 1) as f64 >= mean {
        (t + 1..=i64::from(n)).map(|k| binomial_pmf(n, p, k)).sum::<f64>()
    } else {
        1.0 - (0..=t).map(|k| binomial_pmf(n, p, k)).sum::<f64>()
    };
    tail.clamp(0.0, 1.0)
}

/// Integer threshold on the component count for target rate `lambda`.
pub fn threshold_for_tpr(
    model: &BernoulliComponentModel,
    lambda: f64,
    rule: ThresholdRule,
) -> Result<i64, TheoryError> {
    check_lambda(lambda, true)?;
    let n = model.n_components;
    let tail = |t: i64| binomial_tail(n, model.psi_in, t);
    // The tail is non-increasing in t, so both rules are binary searches.
    let t: Vec<i64> = (-1..=i64::from(n)).collect();
    Ok(match rule {
        ThresholdRule::TailAtMost => {
            let first = t[1..].partition_point(|&t| tail(t) > lambda + TAIL_EPS);
            t[1 + first]
        }
        ThresholdRule::TprAtLeast => {
            let kept = t[..t.len() - 1].partition_point(|&t| tail(t) >= lambda - TAIL_EPS);
            t[kept - 1]
        }
    })
}

/// Out-of-distribution tail `P(S > T | psi_out)` at the exact threshold.
pub fn fpr_exact(model: &BernoulliComponentModel, lambda: f64, rule: ThresholdRule) -> Result<f64, TheoryError> {
    let t = threshold_for_tpr(model, lambda, rule)?;
    Ok(binomial_tail(model.n_components, model.psi_out, t))
}

/// Change in exact FPR when one component is added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentDelta {
    /// Closed-form `FPR(n + 1) - FPR(n)`.
    pub delta: f64,
    /// Difference of the two exact FPR values.
    pub direct: f64,
    pub threshold_before: i64,
    pub threshold_after: i64,
    pub threshold_moved: bool,
}

/// Closed form of `FPR(n+1) - FPR(n)` given both thresholds:
/// `psi * pmf_n(T')` when the threshold stays, and
/// `(psi - 1) pmf_n(T') - sum_{p=T+1}^{T'-1} pmf_n(p)` when it rises.
pub fn delta_closed_form(n: u32, psi_out: f64, before: i64, after: i64) -> f64 {
    if after == before {
        psi_out * binomial_pmf(n, psi_out, after)
    } else {
        let between: f64 = (before + 1..after).map(|p| binomial_pmf(n, psi_out, p)).sum();
        (psi_out - 1.0) * binomial_pmf(n, psi_out, after) - between
    }
}

/// Adds one component and compares the closed form with the direct
/// difference, failing loudly if they disagree.
pub fn delta_fpr_add_component(
    model: &BernoulliComponentModel,
    lambda: f64,
    rule: ThresholdRule,
) -> Result<ComponentDelta, TheoryError> {
    let grown = BernoulliComponentModel::new(model.n_components + 1, model.psi_in, model.psi_out)?;
    let before = threshold_for_tpr(model, lambda, rule)?;
    let after = threshold_for_tpr(&grown, lambda, rule)?;
    if after < before {
        return Err(TheoryError::InternalInconsistency {
            what: format!("threshold decreased from {before} to {after}"),
            difference: (before - after) as f64,
        });
    }
    let n = model.n_components;
    let direct = binomial_tail(n + 1, model.psi_out, after) - binomial_tail(n, model.psi_out, before);
    let delta = delta_closed_form(n, model.psi_out, before, after);
    if (delta - direct).abs() > DELTA_TOLERANCE {
        return Err(TheoryError::InternalInconsistency {
            what: "closed-form delta disagrees with direct difference".into(),
            difference: (delta - direct).abs(),
        });
    }
    Ok(ComponentDelta {
        delta,
        direct,
        threshold_before: before,
        threshold_after: after,
        threshold_moved: after != before,
    })
}
