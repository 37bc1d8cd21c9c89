//! Seeded inputs for the kernel benchmarks.

use cood_core::compositional::PointPair;
use cood_core::eval::{synth_world, SynthConfig, SynthWorld};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform `[-1, 1)` similarity matrix.
pub fn similarity_matrix(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..rows)
        .map(|_| (0..cols).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Points in the unit square and their images under a fixed affine map.
pub fn affine_pairs(count: usize, seed: u64) -> Vec<PointPair> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let p: [f64; 2] = [r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
            (p, [1.1 * p[0] - 0.2 * p[1] + 0.05, 0.3 * p[0] + 0.9 * p[1] - 0.1])
        })
        .collect()
}

/// Score lists with many ties.
pub fn score_lists(n: usize, m: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let mut draw = |k: usize, shift: f64| -> Vec<f64> {
        (0..k)
            .map(|_| (r.random_range(0..1000) as f64 / 1000.0 + shift).min(1.0))
            .collect()
    };
    (draw(n, 0.2), draw(m, 0.0))
}

/// A small synthetic world for end-to-end scoring.
pub fn world(seed: u64) -> SynthWorld {
    synth_world(&SynthConfig {
        classes: 10,
        train_per_class: 20,
        test_per_class: 10,
        ood_per_class: 5,
        seed,
        ..SynthConfig::default()
    })
    .expect("default-derived configuration is valid")
}
