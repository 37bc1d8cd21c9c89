use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::binomial::{threshold_for_tpr, ThresholdRule};
use super::{BernoulliComponentModel, TheoryError};

pub const MIN_TRIALS: u64 = 1000;
const BATCH: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub threshold: i64,
    pub trials: u64,
}

/// Simulated out-of-distribution component counts compared against the exact
/// integer threshold. Trials are split into fixed-size batches, each with its
/// own ChaCha stream, so the result is independent of thread count.
pub fn monte_carlo_fpr(
    model: &BernoulliComponentModel,
    lambda: f64,
    rule: ThresholdRule,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloEstimate, TheoryError> {
    if trials < MIN_TRIALS {
        return Err(TheoryError::InvalidParameter(format!(
            "at least {MIN_TRIALS} trials are required, got {trials}"
        )));
    }
    let threshold = threshold_for_tpr(model, lambda, rule)?;
    let batches = trials.div_ceil(BATCH);
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let len = BATCH.min(trials - b * BATCH);
            let mut count = 0u64;
            for _ in 0..len {
                let fired = (0..model.n_components)
                    .filter(|_| rng.random::<f64>() < model.psi_out)
                    .count() as i64;
                if fired > threshold {
                    count += 1;
                }
            }
            count
        })
        .sum();
    let estimate = hits as f64 / trials as f64;
    Ok(MonteCarloEstimate {
        estimate,
        std_error: (estimate * (1.0 - estimate) / trials as f64).sqrt(),
        threshold,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fpr_exact;
    use super::*;

    #[test]
    fn agrees_with_exact_and_is_deterministic() {
        let m = BernoulliComponentModel::new(3, 0.9, 0.3).unwrap();
        let a = monte_carlo_fpr(&m, 0.95, ThresholdRule::TailAtMost, 200_000, 7).unwrap();
        let b = monte_carlo_fpr(&m, 0.95, ThresholdRule::TailAtMost, 200_000, 7).unwrap();
        assert_eq!(a, b);
        let exact = fpr_exact(&m, 0.95, ThresholdRule::TailAtMost).unwrap();
        assert!((a.estimate - exact).abs() <= 4.0 * a.std_error);
    }

    #[test]
    fn equal_rates_match_exact() {
        let m = BernoulliComponentModel::new(6, 0.5, 0.5).unwrap();
        let est = monte_carlo_fpr(&m, 0.9, ThresholdRule::TailAtMost, 100_000, 1).unwrap();
        let exact = fpr_exact(&m, 0.9, ThresholdRule::TailAtMost).unwrap();
        assert!((est.estimate - exact).abs() <= 4.0 * est.std_error);
    }

    #[test]
    fn too_few_trials_rejected() {
        let m = BernoulliComponentModel::new(3, 0.9, 0.3).unwrap();
        assert!(monte_carlo_fpr(&m, 0.95, ThresholdRule::TailAtMost, 999, 0).is_err());
    }
}
