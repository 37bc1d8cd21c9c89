//! False-positive-rate analysis of component counting: the normal
//! approximation, its sensitivity to the number of components and to
//! correlated evidence, and exact binomial counterparts.

mod binomial;
mod normal;
mod simulation;

use std::io::Write;

use thiserror::Error;

pub use binomial::{
    binomial_pmf, binomial_tail, delta_closed_form, delta_fpr_add_component, fpr_exact, threshold_for_tpr,
    ComponentDelta, ThresholdRule, DELTA_TOLERANCE, TAIL_EPS,
};
pub use normal::{normal_cdf, normal_quantile};
pub use simulation::{monte_carlo_fpr, MonteCarloEstimate, MIN_TRIALS};

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("internal inconsistency: {what} (difference {difference:e})")]
    InternalInconsistency { what: String, difference: f64 },
}

/// Per-component presence model: a score counts components that fire, each
/// independently with probability `psi_in` (in-distribution) or `psi_out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliComponentModel {
    pub n_components: u32,
    pub psi_in: f64,
    pub psi_out: f64,
}

impl BernoulliComponentModel {
    pub fn new(n_components: u32, psi_in: f64, psi_out: f64) -> Result<Self, TheoryError> {
        if n_components == 0 {
            return Err(TheoryError::InvalidParameter("n_components must be at least 1".into()));
        }
        for (name, psi) in [("psi_in", psi_in), ("psi_out", psi_out)] {
            if !(psi > 0.0 && psi < 1.0) {
                return Err(TheoryError::InvalidParameter(format!(
                    "{name} must lie in (0, 1), got {psi}"
                )));
            }
        }
        Ok(BernoulliComponentModel {
            n_components,
            psi_in,
            psi_out,
        })
    }

    /// Moment-matched normal scores: mean `n psi`, variance `n psi (1 - psi)`.
    pub fn normal_approximation(&self) -> GaussianScorePair {
        let n = f64::from(self.n_components);
        GaussianScorePair {
            mu_in: n * self.psi_in,
            sigma_in: (n * self.psi_in * (1.0 - self.psi_in)).sqrt(),
            mu_out: n * self.psi_out,
            sigma_out: (n * self.psi_out * (1.0 - self.psi_out)).sqrt(),
        }
    }
}

/// Normal in- and out-of-distribution score distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianScorePair {
    pub mu_in: f64,
    pub sigma_in: f64,
    pub mu_out: f64,
    pub sigma_out: f64,
}

impl GaussianScorePair {
    pub fn new(mu_in: f64, sigma_in: f64, mu_out: f64, sigma_out: f64) -> Result<Self, TheoryError> {
        let pair = GaussianScorePair {
            mu_in,
            sigma_in,
            mu_out,
            sigma_out,
        };
        pair.validate()?;
        Ok(pair)
    }

    fn validate(&self) -> Result<(), TheoryError> {
        if !(self.mu_in.is_finite() && self.mu_out.is_finite()) {
            return Err(TheoryError::InvalidParameter("means must be finite".into()));
        }
        if !(self.sigma_in > 0.0 && self.sigma_out > 0.0 && self.sigma_in.is_finite() && self.sigma_out.is_finite()) {
            return Err(TheoryError::InvalidParameter(
                "standard deviations must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_lambda(lambda: f64, allow_one: bool) -> Result<(), TheoryError> {
    let ok = lambda > 0.0 && (lambda < 1.0 || (allow_one && lambda == 1.0));
    if ok {
        Ok(())
    } else {
        Err(TheoryError::InvalidParameter(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )))
    }
}

/// FPR at TPR `lambda` for normal scores:
/// `Phi((mu_out - mu_in) / sigma_out + (sigma_in / sigma_out) Phi^-1(lambda))`.
pub fn fpr_normal(g: &GaussianScorePair, lambda: f64) -> Result<f64, TheoryError> {
    g.validate()?;
    check_lambda(lambda, false)?;
    Ok(normal_cdf(
        (g.mu_out - g.mu_in) / g.sigma_out + g.sigma_in / g.sigma_out * normal_quantile(lambda),
    ))
}

/// Proportional change of the normal-approximation FPR argument per added
/// component: `(psi_out - psi_in) / (2 sqrt(n psi_out (1 - psi_out)))`.
pub fn fpr_component_sensitivity(m: &BernoulliComponentModel) -> f64 {
    let n = f64::from(m.n_components);
    (m.psi_out - m.psi_in) / (2.0 * (n * m.psi_out * (1.0 - m.psi_out)).sqrt())
}

/// First-order change of the FPR argument from summed pairwise component
/// covariances in and out of distribution.
pub fn correlation_penalty(
    g: &GaussianScorePair,
    lambda: f64,
    cov_in_sum: f64,
    cov_out_sum: f64,
) -> Result<f64, TheoryError> {
    g.validate()?;
    check_lambda(lambda, false)?;
    let z = normal_quantile(lambda);
    let so2 = g.sigma_out * g.sigma_out;
    Ok((1.0 / g.sigma_out)
        * ((g.mu_in - g.mu_out) / so2 * cov_out_sum + z / g.sigma_in * cov_in_sum - g.sigma_in * z / so2 * cov_out_sum))
}

/// One row of a theory sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: u32,
    pub psi_in: f64,
    pub psi_out: f64,
    pub lambda: f64,
    pub threshold: i64,
    pub fpr_exact: f64,
    pub fpr_normal: f64,
    pub delta: f64,
}

pub const SWEEP_HEADER: &str = "n,psi_in,psi_out,lambda,T,fpr_exact,fpr_normal,delta";

impl SweepRow {
    pub fn evaluate(model: &BernoulliComponentModel, lambda: f64, rule: ThresholdRule) -> Result<Self, TheoryError> {
        let d = delta_fpr_add_component(model, lambda, rule)?;
        Ok(SweepRow {
            n: model.n_components,
            psi_in: model.psi_in,
            psi_out: model.psi_out,
            lambda,
            threshold: d.threshold_before,
            fpr_exact: binomial_tail(model.n_components, model.psi_out, d.threshold_before),
            fpr_normal: fpr_normal(&model.normal_approximation(), lambda)?,
            delta: d.delta,
        })
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.12e},{:.12e},{:.12e}",
            self.n, self.psi_in, self.psi_out, self.lambda, self.threshold, self.fpr_exact, self.fpr_normal, self.delta
        )
    }
}

/// Evaluates every combination, ordered by n, then psi_in, psi_out, lambda.
pub fn sweep(
    ns: &[u32],
    psi_in: &[f64],
    psi_out: &[f64],
    lambdas: &[f64],
    rule: ThresholdRule,
) -> Result<Vec<SweepRow>, TheoryError> {
    let mut rows = Vec::new();
    for &n in ns {
        for &a in psi_in {
            for &b in psi_out {
                let model = BernoulliComponentModel::new(n, a, b)?;
                for &l in lambdas {
                    rows.push(SweepRow::evaluate(&model, l, rule)?);
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}
