//! Rank-selection diagnostics: core consistency, the SSE-by-rank curve and
//! masked holdout RMSE, collected into a per-rank report.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_condition, pinv};
use crate::sym_ncp::{fit, fit_with_warm_start, FitConfig, SymCpModel};
use crate::tensor::{masked_sse, DenseTensor3, MaskTensor, Matrix};

/// Factors with `sigma_min / sigma_max` below this are treated as rank deficient.
pub const CONDITION_TOL: f64 = 1e-10;

/// Attempts at drawing a holdout mask that leaves every row and slice observed.
pub const MASK_ATTEMPTS: usize = 100;

/// Trial `t` of a holdout run uses seed `cfg.seed + HOLDOUT_SEED_STRIDE * t`.
pub const HOLDOUT_SEED_STRIDE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corcondia {
    Value(f64),
    /// The model rank exceeds the smallest tensor dimension.
    NotApplicable,
}

impl Corcondia {
    pub fn value(self) -> Option<f64> {
        match self {
            Corcondia::Value(v) => Some(v),
            Corcondia::NotApplicable => None,
        }
    }
}

/// Core consistency of `model` on `t`, in percent.
///
/// Each factor column is scaled by `lambda_r^(1/3)` so that a perfect CP
/// model has a superdiagonal core of ones. The core is
/// `G = X x1 U+ x2 U+ x3 A+` and the score is `100 * (1 - |G - I|_F^2 / R)`.
pub fn corcondia(t: &DenseTensor3, model: &SymCpModel) -> Result<Corcondia> {
    let (n, n2, p) = t.dims();
    let rank = model.rank();
    let video = model.video_loadings();
    let phase = model.phase_loadings();
    if video.nrows() != n || n2 != n || phase.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "model shaped for N={}, P={} but tensor is {:?}",
            video.nrows(),
            phase.nrows(),
            t.dims()
        )));
    }
    if rank > n.min(p) {
        return Ok(Corcondia::NotApplicable);
    }

    let mut scaled_video = video.clone();
    let mut scaled_phase = phase.clone();
    for (r, w) in model.weights().iter().enumerate() {
        let s = w.cbrt();
        scaled_video.column_mut(r).scale_mut(s);
        scaled_phase.column_mut(r).scale_mut(s);
    }
    for (mode, m) in [(1, &scaled_video), (3, &scaled_phase)] {
        let cond = inverse_condition(m);
        if !(cond >= CONDITION_TOL) {
            return Err(Error::RankDeficient { mode, cond });
        }
    }

    let video_pinv = pinv(&scaled_video); // R x N
    let phase_pinv = pinv(&scaled_phase); // R x P
    let projected: Vec<Matrix> = (0..p)
        .map(|k| &video_pinv * t.slice(k) * video_pinv.transpose())
        .collect();
    let mut dist = 0.0;
    for c in 0..rank {
        let mut g = Matrix::zeros(rank, rank);
        for (k, b) in projected.iter().enumerate() {
            g += b * phase_pinv[(c, k)];
        }
        for j in 0..rank {
            for i in 0..rank {
                let target = if i == j && j == c { 1.0 } else { 0.0 };
                let d = g[(i, j)] - target;
                dist += d * d;
            }
        }
    }
    Ok(Corcondia::Value(100.0 * (1.0 - dist / rank as f64)))
}

/// Best-of-restarts fits for each rank. Ranks are fitted in ascending order and
/// each fit gets the previous rank's model, zero-padded, as an extra restart,
/// so the SSE is non-increasing in rank. Duplicate ranks share one fit.
pub fn error_curve_models(
    t: &DenseTensor3,
    ranks: &[usize],
    cfg: &FitConfig,
) -> Result<Vec<(usize, SymCpModel)>> {
    if ranks.is_empty() {
        return Err(Error::InvalidConfig("rank list is empty".into()));
    }
    let mut unique: Vec<usize> = ranks.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let mut fitted: BTreeMap<usize, SymCpModel> = BTreeMap::new();
    let mut prev: Option<SymCpModel> = None;
    for &rank in &unique {
        let model = fit_with_warm_start(t, rank, cfg, None, prev.as_ref())?;
        fitted.insert(rank, model.clone());
        prev = Some(model);
    }
    Ok(ranks.iter().map(|r| (*r, fitted[r].clone())).collect())
}

/// `(rank, sse)` pairs in the order of `ranks`.
pub fn error_curve(
    t: &DenseTensor3,
    ranks: &[usize],
    cfg: &FitConfig,
) -> Result<Vec<(usize, f64)>> {
    Ok(error_curve_models(t, ranks, cfg)?
        .into_iter()
        .map(|(r, m)| (r, m.final_sse))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutConfig {
    /// Fraction of all entries to hide, counted after symmetrization.
    pub mask_fraction: f64,
    pub trials: usize,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        Self {
            mask_fraction: 0.10,
            trials: 3,
        }
    }
}

impl HoldoutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "mask_fraction must lie in (0, 1), got {}",
                self.mask_fraction
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws a symmetric holdout mask for an `N x N x P` tensor.
///
/// Index triples `(i <= j, p)` are shuffled and hidden (with their mirror) in
/// order until at least `ceil(fraction * N * N * P)` entries are hidden. Masks
/// that hide a whole slice, or a row in every slice, are redrawn.
pub fn holdout_mask(
    dims: (usize, usize, usize),
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MaskTensor> {
    let (n, n2, p) = dims;
    if n != n2 {
        return Err(Error::DimensionMismatch(format!(
            "holdout needs N x N x P, got {dims:?}"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "mask fraction {fraction} outside (0, 1)"
        )));
    }
    let total = n * n * p;
    let target = ((fraction * total as f64).ceil() as usize).max(1);
    let mut cells: Vec<(usize, usize, usize)> = Vec::with_capacity(n * (n + 1) / 2 * p);
    for k in 0..p {
        for j in 0..n {
            for i in 0..=j {
                cells.push((i, j, k));
            }
        }
    }
    let mut last_reason = String::new();
    for _ in 0..MASK_ATTEMPTS {
        cells.shuffle(rng);
        let mut mask = MaskTensor::all_observed(dims);
        let mut hidden = 0;
        for &(i, j, k) in &cells {
            if hidden >= target {
                break;
            }
            mask.set_symmetric(i, j, k, false);
            hidden += if i == j { 1 } else { 2 };
        }
        match mask.underdetermined_reason() {
            None => return Ok(mask),
            Some(reason) => last_reason = reason,
        }
    }
    Err(Error::Underdetermined(format!(
        "no valid holdout mask after {MASK_ATTEMPTS} attempts at fraction {fraction}: {last_reason}"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub rank: usize,
    pub rmse_mean: f64,
    /// Population standard deviation over trials.
    pub rmse_std: f64,
    pub trial_rmse: Vec<f64>,
}

/// RMSE of `model` on the entries hidden by `mask`.
pub fn heldout_rmse(t: &DenseTensor3, model: &SymCpModel, mask: &MaskTensor) -> Result<f64> {
    let heldout = mask.complement();
    let count = heldout.observed_count();
    if count == 0 {
        return Err(Error::InvalidConfig("mask hides no entries".into()));
    }
    let sse = masked_sse(t, &model.reconstruct()?, Some(&heldout))?;
    Ok((sse / count as f64).sqrt())
}

/// Masks, fits and scores `trials` times; trial `tau` draws its mask and its
/// restarts from `cfg.seed + 1000 * tau`.
pub fn holdout_validate(
    t: &DenseTensor3,
    rank: usize,
    holdout: &HoldoutConfig,
    cfg: &FitConfig,
) -> Result<HoldoutResult> {
    holdout.validate()?;
    cfg.validate()?;
    let trial_rmse: Vec<f64> = (0..holdout.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg
                .seed
                .wrapping_add(HOLDOUT_SEED_STRIDE.wrapping_mul(trial as u64));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let mask = holdout_mask(t.dims(), holdout.mask_fraction, &mut rng)?;
            let model = fit(t, rank, &cfg.with_seed(seed), Some(&mask))?;
            heldout_rmse(t, &model, &mask)
        })
        .collect::<Result<_>>()?;
    let (rmse_mean, rmse_std) = mean_and_population_std(&trial_rmse);
    Ok(HoldoutResult {
        rank,
        rmse_mean,
        rmse_std,
        trial_rmse,
    })
}

fn mean_and_population_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorcondiaStatus {
    Ok,
    NotApplicable,
    RankDeficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub corcondia: Option<f64>,
    pub corcondia_status: CorcondiaStatus,
    pub sse: f64,
    pub holdout_rmse_mean: f64,
    pub holdout_rmse_std: f64,
}

/// Per-rank diagnostics, ascending by rank with no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rows: Vec<RankRow>,
}

impl RankReport {
    pub const CSV_HEADER: [&'static str; 5] = [
        "rank",
        "corcondia",
        "sse",
        "holdout_rmse_mean",
        "holdout_rmse_std",
    ];

    /// CSV export; a missing core consistency is written as `NA`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)
            .map_err(|e| Error::Csv(e.to_string()))?;
        for row in &self.rows {
            w.write_record([
                row.rank.to_string(),
                row.corcondia
                    .map_or_else(|| "NA".to_string(), |c| c.to_string()),
                row.sse.to_string(),
                row.holdout_rmse_mean.to_string(),
                row.holdout_rmse_std.to_string(),
            ])
            .map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs all three diagnostics for every rank in `ranks`.
///
/// Core consistency is computed on the error-curve model of each rank. A
/// rank-deficient model (for instance a padded warm start that kept a zero
/// component) is reported as such rather than failing the whole report.
pub fn rank_report(
    t: &DenseTensor3,
    ranks: &[usize],
    cfg: &FitConfig,
    holdout: &HoldoutConfig,
) -> Result<RankReport> {
    let mut unique = ranks.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let (n, _, _) = t.dims();
    if let Some(bad) = unique.iter().find(|r| **r == 0 || **r > n) {
        return Err(Error::InvalidConfig(format!("rank {bad} outside [1, {n}]")));
    }
    let curve = error_curve_models(t, &unique, cfg)?;
    let holdouts: Vec<HoldoutResult> = unique
        .par_iter()
        .map(|&r| holdout_validate(t, r, holdout, cfg))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(unique.len());
    for ((rank, model), h) in curve.into_iter().zip(holdouts) {
        let (corcondia, corcondia_status) = match corcondia(t, &model) {
            Ok(Corcondia::Value(v)) => (Some(v), CorcondiaStatus::Ok),
            Ok(Corcondia::NotApplicable) => (None, CorcondiaStatus::NotApplicable),
            Err(Error::RankDeficient { .. }) => (None, CorcondiaStatus::RankDeficient),
            Err(e) => return Err(e),
        };
        rows.push(RankRow {
            rank,
            corcondia,
            corcondia_status,
            sse: model.final_sse,
            holdout_rmse_mean: h.rmse_mean,
            holdout_rmse_std: h.rmse_std,
        });
    }
    Ok(RankReport { rows })
}
