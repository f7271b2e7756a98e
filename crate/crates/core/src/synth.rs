//! Seeded generators for synthetic models, tensors and embedding sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::similarity::EmbeddingSet;
use crate::sym_ncp::CpFactors;
use crate::tensor::{DenseTensor3, Matrix};

/// Random non-negative symmetric CP factors: weights uniform on `[1, 2)`,
/// loadings uniform on `[0, 1)`.
pub fn random_factors(n: usize, p: usize, rank: usize, seed: u64) -> CpFactors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..rank).map(|_| 1.0 + rng.random::<f64>()).collect();
    let video = Matrix::from_fn(n, rank, |_, _| rng.random::<f64>());
    let phase = Matrix::from_fn(p, rank, |_, _| rng.random::<f64>());
    CpFactors {
        weights,
        phase,
        video,
    }
}

/// Random symmetric tensor with entries uniform on `[0, 1)`.
pub fn random_symmetric_tensor(n: usize, p: usize, seed: u64) -> DenseTensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = DenseTensor3::zeros((n, n, p));
    for k in 0..p {
        for j in 0..n {
            for i in 0..=j {
                let v = rng.random::<f64>();
                t.set(i, j, k, v);
                t.set(j, i, k, v);
            }
        }
    }
    t
}

/// Tucker tensor `G x1 U x2 U x3 A` with a dense Gaussian core symmetric in
/// its first two modes and Gaussian factors (`U: n x n`, `A: p x p`).
pub fn random_symmetric_tucker(n: usize, p: usize, seed: u64) -> DenseTensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut core = DenseTensor3::zeros((n, n, p));
    for k in 0..p {
        for j in 0..n {
            for i in 0..=j {
                let v = normal.sample(&mut rng);
                core.set(i, j, k, v);
                core.set(j, i, k, v);
            }
        }
    }
    let u = Matrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
    let a = Matrix::from_fn(p, p, |_, _| normal.sample(&mut rng));
    // Per core slice: U G_c U^T, then mix slices with A.
    let projected: Vec<Matrix> = (0..p)
        .map(|c| {
            let g = core.slice(c).into_owned();
            &u * g * u.transpose()
        })
        .collect();
    let mut t = DenseTensor3::zeros((n, n, p));
    for k in 0..p {
        let mut s = Matrix::zeros(n, n);
        for (c, m) in projected.iter().enumerate() {
            s += m * a[(k, c)];
        }
        for j in 0..n {
            for i in 0..=j {
                let v = s[(i, j)];
                t.set(i, j, k, v);
                t.set(j, i, k, v);
            }
        }
    }
    t
}

/// Embedding set with `groups` latent clusters: each video is assigned to
/// `video % groups` and its phase vectors are a shared phase/group prototype
/// plus Gaussian noise of scale `noise`.
pub fn clustered_embeddings(
    n: usize,
    phases: &[String],
    dim: usize,
    groups: usize,
    noise: f64,
    seed: u64,
) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let groups = groups.max(1);
    let prototypes: Vec<Vec<Vec<f64>>> = (0..groups)
        .map(|_| {
            phases
                .iter()
                .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                .collect()
        })
        .collect();
    let videos: Vec<String> = (0..n).map(|v| format!("video_{v:02}")).collect();
    let vectors = (0..n)
        .map(|v| {
            prototypes[v % groups]
                .iter()
                .map(|proto| {
                    proto
                        .iter()
                        .map(|x| x + noise * normal.sample(&mut rng))
                        .collect()
                })
                .collect()
        })
        .collect();
    EmbeddingSet::new(videos, phases.to_vec(), vectors).expect("generated embeddings are valid")
}
