//! Pipeline configuration: one TOML or JSON file, with command-line overrides.
//!
//! All randomness derives from the root `seed`:
//!
//! | stage        | seed          |
//! |--------------|---------------|
//! | fit          | `seed`        |
//! | diagnostics  | `seed + 1`    |
//! | holdout      | `seed + 1`    |
//! | t-SNE        | `seed + 2`    |
//!
//! Within the diagnostics stage, restart `k` uses `stage_seed + k` and holdout
//! trial `t` uses `stage_seed + 1000 * t`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phasecp::{FitConfig, HoldoutConfig, TsneConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub phases: Vec<String>,
    pub paths: PathsConfig,
    pub fit: FitSection,
    pub diagnostics: DiagnosticsSection,
    pub tsne: TsneSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub embeddings: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub rank: usize,
    pub iters: usize,
    pub restarts: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub ranks: Vec<usize>,
    pub mask_fraction: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneSection {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            phases: phasecp::similarity::default_phases(),
            paths: PathsConfig::default(),
            fit: FitSection::default(),
            diagnostics: DiagnosticsSection::default(),
            tsne: TsneSection::default(),
        }
    }
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            embeddings: None,
            metadata: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitConfig::default();
        Self {
            rank: 4,
            iters: d.max_iters,
            restarts: d.restarts,
            tol: d.tol,
        }
    }
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = HoldoutConfig::default();
        Self {
            ranks: (1..=10).collect(),
            mask_fraction: d.mask_fraction,
            trials: d.trials,
        }
    }
}

impl Default for TsneSection {
    fn default() -> Self {
        let d = TsneConfig::default();
        Self {
            perplexity: d.perplexity,
            learning_rate: d.learning_rate,
            iterations: d.iterations,
            early_exaggeration: d.early_exaggeration,
        }
    }
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg = if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            serde_json::from_str(&text)
                .with_context(|| format!("parsing JSON config {}", path.display()))?
        } else {
            toml::from_str(&text)
                .with_context(|| format!("parsing TOML config {}", path.display()))?
        };
        Ok(cfg)
    }

    /// Checks everything that can be checked without the data.
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            bail!("phases list is empty");
        }
        if self.fit.rank == 0 {
            bail!("fit.rank must be at least 1");
        }
        if self.diagnostics.ranks.is_empty() {
            bail!("diagnostics.ranks is empty");
        }
        if self.diagnostics.ranks.contains(&0) {
            bail!("diagnostics.ranks must be >= 1");
        }
        self.fit_config().validate()?;
        self.holdout_config().validate()?;
        self.tsne_config().validate()?;
        Ok(())
    }

    /// Fit rank bound, which depends on the number of videos.
    pub fn validate_fit_rank(&self, n_videos: usize) -> Result<()> {
        if self.fit.rank > n_videos {
            bail!(
                "fit.rank {} exceeds the number of videos {n_videos}",
                self.fit.rank
            );
        }
        Ok(())
    }

    /// Diagnostics rank bounds, which depend on the number of videos.
    pub fn validate_diagnostics_ranks(&self, n_videos: usize) -> Result<()> {
        if let Some(r) = self.diagnostics.ranks.iter().find(|r| **r > n_videos) {
            bail!("diagnostics rank {r} exceeds the number of videos {n_videos}");
        }
        Ok(())
    }

    pub fn fit_seed(&self) -> u64 {
        self.seed
    }

    pub fn diagnostics_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn tsne_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_iters: self.fit.iters,
            restarts: self.fit.restarts,
            tol: self.fit.tol,
            seed: self.fit_seed(),
            ..FitConfig::default()
        }
    }

    pub fn diagnostics_fit_config(&self) -> FitConfig {
        self.fit_config().with_seed(self.diagnostics_seed())
    }

    pub fn holdout_config(&self) -> HoldoutConfig {
        HoldoutConfig {
            mask_fraction: self.diagnostics.mask_fraction,
            trials: self.diagnostics.trials,
        }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            perplexity: self.tsne.perplexity,
            learning_rate: self.tsne.learning_rate,
            iterations: self.tsne.iterations,
            early_exaggeration: self.tsne.early_exaggeration,
            seed: self.tsne_seed(),
            ..TsneConfig::default()
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring `paths.out_dir` (where the
    /// outputs go does not change what they contain).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses `1-10`, `1..10`, `1..=10` or `1,2,5` (mixed forms allowed: `1-3,6`).
pub fn parse_ranks(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let range = part
            .split_once("..=")
            .or_else(|| part.split_once(".."))
            .or_else(|| part.split_once('-'));
        match range {
            Some((a, b)) => {
                let lo: usize = a
                    .trim()
                    .parse()
                    .with_context(|| format!("bad rank range `{part}`"))?;
                let hi: usize = b
                    .trim()
                    .parse()
                    .with_context(|| format!("bad rank range `{part}`"))?;
                if lo > hi {
                    bail!("empty rank range `{part}`");
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().with_context(|| format!("bad rank `{part}`"))?),
        }
    }
    if out.is_empty() {
        bail!("no ranks given");
    }
    Ok(out)
}
