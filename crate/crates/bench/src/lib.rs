//! Fixtures shared by the criterion benchmarks.

use lpcfm::VariantLine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_vector(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_line(d: usize, seed: u64) -> VariantLine {
    VariantLine::new(random_vector(d, seed), random_vector(d, seed + 1)).expect("random line")
}
