//! Synthetic inputs for the benchmarks.

use blendforge_core::sampler::{normalize_rows, EmbeddingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` unit rows of dimension `dim` drawn uniformly from the cube, then normalized.
pub fn synthetic_embeddings(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    normalize_rows(&rows).expect("random rows are nonzero")
}
