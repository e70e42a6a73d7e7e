#![allow(dead_code)]

use gfmatch::uncertainty::FeatureBlock;
use nalgebra::Matrix2x6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Blocks with entries uniform in [-1, 1).
pub fn random_blocks(seed: u64, n: usize) -> Vec<FeatureBlock> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| FeatureBlock::mono(i, Matrix2x6::from_fn(|_, _| rng.random_range(-1.0..1.0)))).collect()
}
