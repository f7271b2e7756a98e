//! Non-negative symmetric CP fitting by projected alternating least squares.
//!
//! The model is `X(i,j,p) ~ sum_r lambda_r * a(p,r) * u(i,r) * u(j,r)` with all
//! factors non-negative. Each sweep:
//!
//! 1. (masked fits) replaces held-out entries of the working tensor with the
//!    current reconstruction,
//! 2. solves the unconstrained mode-1 update with mode 2 fixed at `U`, then the
//!    mode-2 update with mode 1 fixed at that result, averages the two and
//!    clamps at zero,
//! 3. rescales `U` to unit columns (the scale moves into `A`),
//! 4. solves the unconstrained `A` update and clamps at zero.
//!
//! During iteration `lambda` stays folded into `A`; [`normalize_and_sort`]
//! splits it back out at the end. Projected ALS is not monotone, so every
//! restart reports its best iterate rather than its last.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_right_spd;
use crate::tensor::{cp_reconstruct, masked_sse, DenseTensor3, MaskTensor, Matrix};

/// Tolerance on `|x(i,j,p) - x(j,i,p)|` accepted as symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Entries i.i.d. uniform on `[0, 1)`.
    #[default]
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iters: usize,
    pub restarts: usize,
    /// Stop once the relative SSE change between sweeps drops below this.
    pub tol: f64,
    /// Restart `k` draws its initial factors from `seed + k`.
    pub seed: u64,
    pub init: Init,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            restarts: 5,
            tol: 1e-8,
            seed: 0,
            init: Init::UniformRandom,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be >= 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Weights plus phase (`P x R`) and video (`N x R`) loadings.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    pub weights: Vec<f64>,
    pub phase: Matrix,
    pub video: Matrix,
}

impl CpFactors {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn reconstruct(&self) -> Result<DenseTensor3> {
        cp_reconstruct(&self.weights, &self.phase, &self.video)
    }

    /// Appends `extra` all-zero components.
    pub fn padded(&self, extra: usize) -> Self {
        let rank = self.rank() + extra;
        let mut weights = self.weights.clone();
        weights.resize(rank, 0.0);
        Self {
            weights,
            phase: self.phase.clone().resize_horizontally(rank, 0.0),
            video: self.video.clone().resize_horizontally(rank, 0.0),
        }
    }
}

/// A fitted model with unit-norm non-negative columns and `lambda` sorted
/// descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymCpModel {
    pub factors: CpFactors,
    pub final_sse: f64,
    /// SSE of each restart's best iterate, random restarts first, then the
    /// padded warm start when one was supplied.
    pub per_restart_sse: Vec<f64>,
    pub winning_restart: usize,
    pub restart_seed: u64,
    pub seed: u64,
}

impl SymCpModel {
    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn weights(&self) -> &[f64] {
        &self.factors.weights
    }

    pub fn phase_loadings(&self) -> &Matrix {
        &self.factors.phase
    }

    pub fn video_loadings(&self) -> &Matrix {
        &self.factors.video
    }

    pub fn reconstruct(&self) -> Result<DenseTensor3> {
        self.factors.reconstruct()
    }

    pub fn to_json(&self) -> ModelJson {
        ModelJson {
            rank: self.rank(),
            lambda: self.factors.weights.clone(),
            phase_loadings: rows(&self.factors.phase),
            video_loadings: rows(&self.factors.video),
            final_sse: self.final_sse,
            per_restart_sse: self.per_restart_sse.clone(),
            seed: self.seed,
            restart_seed: self.restart_seed,
            winning_restart: self.winning_restart,
        }
    }

    pub fn from_json(doc: ModelJson) -> Result<Self> {
        let rank = doc.rank;
        if doc.lambda.len() != rank {
            return Err(Error::DimensionMismatch(format!(
                "model declares rank {rank} but has {} weights",
                doc.lambda.len()
            )));
        }
        let phase = from_rows(&doc.phase_loadings, rank, "phase_loadings")?;
        let video = from_rows(&doc.video_loadings, rank, "video_loadings")?;
        Ok(Self {
            factors: CpFactors {
                weights: doc.lambda,
                phase,
                video,
            },
            final_sse: doc.final_sse,
            per_restart_sse: doc.per_restart_sse,
            winning_restart: doc.winning_restart,
            restart_seed: doc.restart_seed,
            seed: doc.seed,
        })
    }
}

/// On-disk model document; loadings are stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub rank: usize,
    pub lambda: Vec<f64>,
    pub phase_loadings: Vec<Vec<f64>>,
    pub video_loadings: Vec<Vec<f64>>,
    pub final_sse: f64,
    pub per_restart_sse: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub restart_seed: u64,
    #[serde(default)]
    pub winning_restart: usize,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], rank: usize, what: &str) -> Result<Matrix> {
    if rows.is_empty() || rows.iter().any(|r| r.len() != rank) {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be a non-empty list of rows with {rank} entries"
        )));
    }
    Ok(Matrix::from_fn(rows.len(), rank, |i, j| rows[i][j]))
}

/// Scales every column of both factors to unit norm, folding the scales into
/// the weights, then orders components by weight (stable, descending). A
/// component with a zero column or zero weight becomes all-zero with weight 0.
pub fn normalize_and_sort(raw: CpFactors) -> CpFactors {
    let rank = raw.rank();
    let mut phase = raw.phase;
    let mut video = raw.video;
    let mut weights = raw.weights;
    for r in 0..rank {
        let na = phase.column(r).norm();
        let nu = video.column(r).norm();
        let w = weights[r] * na * nu * nu;
        if na == 0.0 || nu == 0.0 || w == 0.0 || !w.is_finite() {
            phase.column_mut(r).fill(0.0);
            video.column_mut(r).fill(0.0);
            weights[r] = 0.0;
        } else {
            phase.column_mut(r).unscale_mut(na);
            video.column_mut(r).unscale_mut(nu);
            weights[r] = w;
        }
    }
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    CpFactors {
        weights: order.iter().map(|&r| weights[r]).collect(),
        phase: Matrix::from_fn(phase.nrows(), rank, |i, c| phase[(i, order[c])]),
        video: Matrix::from_fn(video.nrows(), rank, |i, c| video[(i, order[c])]),
    }
}

/// Fits the model with `cfg.restarts` random restarts and keeps the one with
/// the lowest SSE (on observed entries when masked).
pub fn fit(
    t: &DenseTensor3,
    rank: usize,
    cfg: &FitConfig,
    mask: Option<&MaskTensor>,
) -> Result<SymCpModel> {
    fit_with_warm_start(t, rank, cfg, mask, None)
}

/// As [`fit`], plus one extra restart initialised from `warm` padded with zero
/// components up to `rank`. Starting from that point the restart can only
/// match or beat `warm`'s SSE, which makes best-of-restarts SSE non-increasing
/// in rank.
pub fn fit_with_warm_start(
    t: &DenseTensor3,
    rank: usize,
    cfg: &FitConfig,
    mask: Option<&MaskTensor>,
    warm: Option<&SymCpModel>,
) -> Result<SymCpModel> {
    cfg.validate()?;
    let (n, _, p) = validate_input(t, rank, mask)?;

    let negatives = match mask {
        None => t.count_negative(),
        Some(m) => t
            .values()
            .iter()
            .zip(m.flags())
            .filter(|(v, f)| **f && **v < 0.0)
            .count(),
    };
    if negatives > 0 {
        warn!("input tensor has {negatives} negative entries; a non-negative model cannot represent them");
    }

    let mut starts: Vec<(Matrix, Matrix)> = (0..cfg.restarts)
        .map(|k| random_start(n, p, rank, cfg.seed.wrapping_add(k as u64)))
        .collect();
    if let Some(w) = warm {
        let wr = w.rank();
        if wr > rank {
            return Err(Error::InvalidConfig(format!(
                "warm start has rank {wr}, larger than the requested rank {rank}"
            )));
        }
        if w.video_loadings().nrows() != n || w.phase_loadings().nrows() != p {
            return Err(Error::DimensionMismatch(format!(
                "warm start shaped for N={}, P={} but tensor has N={n}, P={p}",
                w.video_loadings().nrows(),
                w.phase_loadings().nrows()
            )));
        }
        let padded = w.factors.padded(rank - wr);
        let mut phase = padded.phase;
        for r in 0..rank {
            let s = padded.weights[r];
            phase.column_mut(r).scale_mut(s);
        }
        starts.push((phase, padded.video));
    }

    let results: Vec<Restart> = starts
        .into_par_iter()
        .map(|(phase, video)| run_restart(t, mask, phase, video, cfg))
        .collect::<Result<_>>()?;

    let mut winner = 0;
    for (k, r) in results.iter().enumerate() {
        if r.sse < results[winner].sse {
            winner = k;
        }
    }
    let per_restart_sse: Vec<f64> = results.iter().map(|r| r.sse).collect();
    let best = results
        .into_iter()
        .nth(winner)
        .expect("at least one restart");
    let factors = normalize_and_sort(CpFactors {
        weights: vec![1.0; rank],
        phase: best.phase,
        video: best.video,
    });
    Ok(SymCpModel {
        factors,
        final_sse: per_restart_sse[winner],
        per_restart_sse,
        winning_restart: winner,
        restart_seed: cfg.seed.wrapping_add(winner as u64),
        seed: cfg.seed,
    })
}

fn validate_input(
    t: &DenseTensor3,
    rank: usize,
    mask: Option<&MaskTensor>,
) -> Result<(usize, usize, usize)> {
    let (n, n2, p) = t.dims();
    if n != n2 {
        return Err(Error::DimensionMismatch(format!(
            "symmetric fit needs an N x N x P tensor, got {:?}",
            t.dims()
        )));
    }
    if rank == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    if rank > n {
        return Err(Error::InvalidConfig(format!("rank {rank} exceeds N = {n}")));
    }
    if let Some(m) = mask {
        if m.dims() != t.dims() {
            return Err(Error::DimensionMismatch(format!(
                "mask {:?} vs tensor {:?}",
                m.dims(),
                t.dims()
            )));
        }
        m.check_symmetric()?;
        if let Some(reason) = m.underdetermined_reason() {
            return Err(Error::Underdetermined(reason));
        }
    }
    // Only pairs where both entries are observed are compared; held-out
    // values are never read.
    for k in 0..p {
        for j in 0..n {
            for i in 0..j {
                if let Some(m) = mask {
                    if !m.is_observed(i, j, k) {
                        continue;
                    }
                }
                let diff = (t.get(i, j, k) - t.get(j, i, k)).abs();
                if diff > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { i, j, k, diff });
                }
            }
        }
    }
    Ok((n, n2, p))
}

fn random_start(n: usize, p: usize, rank: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let video = Matrix::from_fn(n, rank, |_, _| rng.random::<f64>());
    let phase = Matrix::from_fn(p, rank, |_, _| rng.random::<f64>());
    (phase, video)
}

struct Restart {
    sse: f64,
    phase: Matrix,
    video: Matrix,
}

fn run_restart(
    t: &DenseTensor3,
    mask: Option<&MaskTensor>,
    mut phase: Matrix,
    mut video: Matrix,
    cfg: &FitConfig,
) -> Result<Restart> {
    let rank = video.ncols();
    let ones = vec![1.0; rank];
    let mut work = t.clone();
    let mut recon = cp_reconstruct(&ones, &phase, &video)?;
    let mut sse = masked_sse(t, &recon, mask)?;
    let mut best = Restart {
        sse,
        phase: phase.clone(),
        video: video.clone(),
    };
    let mut prev = sse;

    for _ in 0..cfg.max_iters {
        if let Some(m) = mask {
            impute(&mut work, &recon, m);
        }

        let first = update_video(&work, &video, &phase);
        let second = update_video(&work, &first, &phase);
        video = (first + second) * 0.5;
        video.apply(|x| *x = x.max(0.0));

        for r in 0..rank {
            let nrm = video.column(r).norm();
            if nrm > 0.0 {
                video.column_mut(r).unscale_mut(nrm);
                phase.column_mut(r).scale_mut(nrm * nrm);
            }
        }

        phase = update_phase(&work, &video);
        phase.apply(|x| *x = x.max(0.0));

        recon = cp_reconstruct(&ones, &phase, &video)?;
        sse = masked_sse(t, &recon, mask)?;
        if !sse.is_finite() {
            break;
        }
        if sse < best.sse {
            best = Restart {
                sse,
                phase: phase.clone(),
                video: video.clone(),
            };
        }
        if sse == 0.0 {
            break;
        }
        let rel = (prev - sse).abs() / prev.max(f64::MIN_POSITIVE);
        if rel < cfg.tol {
            break;
        }
        prev = sse;
    }
    Ok(best)
}

fn impute(work: &mut DenseTensor3, recon: &DenseTensor3, mask: &MaskTensor) {
    let (n, _, p) = work.dims();
    for k in 0..p {
        for j in 0..n {
            for i in 0..n {
                if !mask.is_observed(i, j, k) {
                    work.set(i, j, k, recon.get(i, j, k));
                }
            }
        }
    }
}

/// Least-squares update of the mode-1 factor with mode 2 fixed at `fixed`:
/// `X_(1) (A kr fixed) [(A^T A) * (fixed^T fixed)]^-1`.
fn update_video(x: &DenseTensor3, fixed: &Matrix, phase: &Matrix) -> Matrix {
    let (n, _, p) = x.dims();
    let rank = fixed.ncols();
    let mut mttkrp = Matrix::zeros(n, rank);
    for k in 0..p {
        let y = x.slice(k) * fixed;
        for r in 0..rank {
            let a = phase[(k, r)];
            if a != 0.0 {
                mttkrp.column_mut(r).axpy(a, &y.column(r), 1.0);
            }
        }
    }
    let gram = (phase.transpose() * phase).component_mul(&(fixed.transpose() * fixed));
    solve_right_spd(&mttkrp, &gram)
}

/// Least-squares update of the phase factor: `X_(3) (U kr U) [(U^T U)^2]^-1`.
fn update_phase(x: &DenseTensor3, video: &Matrix) -> Matrix {
    let (_, _, p) = x.dims();
    let rank = video.ncols();
    let mut mttkrp = Matrix::zeros(p, rank);
    for k in 0..p {
        let y = x.slice(k) * video;
        for r in 0..rank {
            mttkrp[(k, r)] = video.column(r).dot(&y.column(r));
        }
    }
    let utu = video.transpose() * video;
    let gram = utu.component_mul(&utu);
    solve_right_spd(&mttkrp, &gram)
}
