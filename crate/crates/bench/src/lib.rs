//! Shared fixtures for the benchmarks.

use phasecp::synth::{clustered_embeddings, random_factors};
use phasecp::{DenseTensor3, EmbeddingSet, SymCpModel};

/// Planted rank-`rank` tensor at the study's scale (31 videos, 3 phases by default).
pub fn planted(n: usize, p: usize, rank: usize, seed: u64) -> DenseTensor3 {
    random_factors(n, p, rank, seed)
        .reconstruct()
        .expect("planted tensor")
}

pub fn embeddings(n: usize, dim: usize, seed: u64) -> EmbeddingSet {
    let phases = phasecp::similarity::default_phases();
    clustered_embeddings(n, &phases, dim, 4, 0.1, seed)
}

pub fn fitted(t: &DenseTensor3, rank: usize) -> SymCpModel {
    let cfg = phasecp::FitConfig {
        restarts: 1,
        ..Default::default()
    };
    phasecp::fit(t, rank, &cfg, None).expect("fit")
}
