//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use suitability_core::gbt::{train, GbtEnsemble, GbtParams};
use suitability_core::preprocess::Row;

/// `n` rows drawn around `k` random centres in the unit cube.
pub fn blobs(n: usize, k: usize, spread: f64, seed: u64) -> (Vec<Row>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Row> = (0..k)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.1..0.9)))
        .collect();
    let noise = Normal::new(0.0, spread).expect("valid spread");
    (0..n)
        .map(|i| {
            let c = i % k;
            let row: Row = std::array::from_fn(|j| centres[c][j] + noise.sample(&mut rng));
            (row, c)
        })
        .unzip()
}

/// A deep ensemble trained on overlapping blobs, so trees use many features.
pub fn trained_ensemble(rounds: usize) -> (GbtEnsemble, Vec<Row>) {
    let (rows, labels) = blobs(1_000, 5, 0.15, 3);
    let params = GbtParams {
        rounds,
        max_depth: 4,
        early_stopping_patience: rounds,
        ..Default::default()
    };
    let model = train(&rows, &labels, 5, &params, 0.0, 1).expect("fixture trains");
    (model.ensemble, rows)
}
