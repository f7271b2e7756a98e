//! Exact t-SNE for small point sets.
//!
//! Input affinities come from Gaussian kernels whose per-point precision is
//! bisected until the conditional distribution hits the target perplexity.
//! The output distribution uses a Student-t kernel with one degree of freedom
//! and the embedding is optimized by gradient descent with momentum, per-
//! coordinate gains and an early-exaggeration phase.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Tolerance on `|H - ln(perplexity)|` (nats) in the bandwidth search.
pub const ENTROPY_TOL: f64 = 1e-5;
pub const MAX_BISECTION_STEPS: usize = 50;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub early_exaggeration: f64,
    /// Exaggeration is applied for this many leading iterations.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// First iteration that uses `final_momentum`.
    pub momentum_switch_iter: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 5.0,
            learning_rate: 200.0,
            iterations: 1000,
            seed: 0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.perplexity > 0.0) {
            return Err(Error::InvalidConfig("perplexity must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.early_exaggeration > 0.0) {
            return Err(Error::InvalidConfig(
                "early_exaggeration must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneOutput {
    /// `N x 2`, centered at the origin.
    pub embedding: Matrix,
    /// Symmetrized input affinities `P`.
    pub affinities: Matrix,
    /// Per-row entropy (nats) of the conditional distributions.
    pub row_entropies: Vec<f64>,
    /// `KL(P || Q)` after each iteration, against the unexaggerated `P`.
    pub kl_trace: Vec<f64>,
}

/// Projects the rows of `points` to 2D.
pub fn tsne_project(points: &Matrix, cfg: &TsneConfig) -> Result<Matrix> {
    Ok(tsne_run(points, cfg)?.embedding)
}

pub fn tsne_run(points: &Matrix, cfg: &TsneConfig) -> Result<TsneOutput> {
    cfg.validate()?;
    let n = points.nrows();
    if n < 4 {
        return Err(Error::InvalidConfig(format!(
            "t-SNE needs at least 4 points, got {n}"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "t-SNE input contains non-finite values".into(),
        ));
    }
    if cfg.perplexity >= (n - 1) as f64 / 3.0 {
        warn!(
            "perplexity {} is large for {n} points (heuristic limit (N-1)/3 = {:.2})",
            cfg.perplexity,
            (n - 1) as f64 / 3.0
        );
    }

    let dist = squared_distances(points);
    let (affinities, row_entropies) = joint_affinities(&dist, cfg.perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y = Matrix::from_fn(n, 2, |_, _| normal.sample(&mut rng));
    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::from_element(n, 2, 1.0);
    let mut kl_trace = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < cfg.momentum_switch_iter {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };

        let (q, num) = student_affinities(&y);
        let grad = gradient(&affinities, &q, &num, &y, exaggeration);
        for idx in 0..n * 2 {
            let g = grad[idx];
            let same_sign = (g > 0.0) == (update[idx] > 0.0);
            gains[idx] = if same_sign {
                gains[idx] * 0.8
            } else {
                gains[idx] + 0.2
            };
            if gains[idx] < MIN_GAIN {
                gains[idx] = MIN_GAIN;
            }
            update[idx] = momentum * update[idx] - cfg.learning_rate * gains[idx] * g;
            y[idx] += update[idx];
        }
        center(&mut y);

        let (q, _) = student_affinities(&y);
        kl_trace.push(kl_divergence(&affinities, &q)?);
    }

    Ok(TsneOutput {
        embedding: y,
        affinities,
        row_entropies,
        kl_trace,
    })
}

fn squared_distances(points: &Matrix) -> Matrix {
    let n = points.nrows();
    let mut d = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let mut s = 0.0;
            for c in 0..points.ncols() {
                let diff = points[(i, c)] - points[(j, c)];
                s += diff * diff;
            }
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    d
}

/// Conditional distribution of row `i` at precision `beta`, and its entropy in
/// nats. Distances are shifted by the row minimum for numerical range.
fn conditional_row(dist: &Matrix, i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let n = dist.nrows();
    let dmin = (0..n)
        .filter(|&j| j != i)
        .map(|j| dist[(i, j)])
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for j in 0..n {
        out[j] = if j == i {
            0.0
        } else {
            (-(dist[(i, j)] - dmin) * beta).exp()
        };
        sum += out[j];
    }
    let mut weighted = 0.0;
    for j in 0..n {
        out[j] /= sum;
        if j != i {
            weighted += out[j] * (dist[(i, j)] - dmin);
        }
    }
    sum.ln() + beta * weighted
}

/// Bisects each row's precision to match `perplexity`, then symmetrizes:
/// `P = (P_cond + P_cond^T) / (2N)`.
pub fn joint_affinities(dist: &Matrix, perplexity: f64) -> (Matrix, Vec<f64>) {
    let n = dist.nrows();
    let target = perplexity.ln();
    let mut cond = Matrix::zeros(n, n);
    let mut entropies = vec![0.0; n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let spread: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist[(i, j)])
            .sum::<f64>()
            / (n - 1) as f64;
        let mut beta = if spread > 0.0 { 1.0 / spread } else { 1.0 };
        let mut lo = 0.0_f64;
        let mut hi = f64::INFINITY;
        let mut h = conditional_row(dist, i, beta, &mut row);
        for _ in 0..MAX_BISECTION_STEPS {
            let diff = h - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                // Too flat: sharpen.
                lo = beta;
                beta = if hi.is_finite() {
                    0.5 * (beta + hi)
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = if lo > 0.0 {
                    0.5 * (beta + lo)
                } else {
                    beta / 2.0
                };
            }
            h = conditional_row(dist, i, beta, &mut row);
        }
        entropies[i] = h;
        for j in 0..n {
            cond[(i, j)] = row[j];
        }
    }
    let scale = 1.0 / (2.0 * n as f64);
    let joint = Matrix::from_fn(n, n, |i, j| (cond[(i, j)] + cond[(j, i)]) * scale);
    (joint, entropies)
}

/// Student-t affinities `Q` and the unnormalized kernel `1 / (1 + |yi - yj|^2)`.
fn student_affinities(y: &Matrix) -> (Matrix, Matrix) {
    let n = y.nrows();
    let mut num = Matrix::zeros(n, n);
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..j {
            let dx = y[(i, 0)] - y[(j, 0)];
            let dy = y[(i, 1)] - y[(j, 1)];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[(i, j)] = v;
            num[(j, i)] = v;
            sum += 2.0 * v;
        }
    }
    let q = num.map(|v| v / sum);
    (q, num)
}

fn gradient(p: &Matrix, q: &Matrix, num: &Matrix, y: &Matrix, exaggeration: f64) -> Matrix {
    let n = y.nrows();
    let mut grad = Matrix::zeros(n, 2);
    for i in 0..n {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let m = (exaggeration * p[(i, j)] - q[(i, j)]) * num[(i, j)];
            gx += m * (y[(i, 0)] - y[(j, 0)]);
            gy += m * (y[(i, 1)] - y[(j, 1)]);
        }
        grad[(i, 0)] = 4.0 * gx;
        grad[(i, 1)] = 4.0 * gy;
    }
    grad
}

fn center(y: &mut Matrix) {
    let n = y.nrows() as f64;
    for c in 0..y.ncols() {
        let mean = y.column(c).sum() / n;
        y.column_mut(c).add_scalar_mut(-mean);
    }
}

/// `sum p log(p / q)` over off-diagonal pairs, with `0 log(0 / q) = 0`.
pub fn kl_divergence(p: &Matrix, q: &Matrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::DimensionMismatch(format!(
            "affinities {:?} vs {:?}",
            p.shape(),
            q.shape()
        )));
    }
    let mut kl = 0.0;
    for j in 0..p.ncols() {
        for i in 0..p.nrows() {
            if i == j {
                continue;
            }
            let pv = p[(i, j)];
            if pv <= 0.0 {
                continue;
            }
            let qv = q[(i, j)];
            if qv <= 0.0 {
                return Err(Error::ZeroQ { i, j, p: pv });
            }
            kl += pv * (pv / qv).ln();
        }
    }
    Ok(kl.max(0.0))
}
