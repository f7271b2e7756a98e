//! Pipeline stages. Each reads its inputs from the configured paths or the
//! output directory and writes its artifacts back into the output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use phasecp::diagnostics::{holdout_validate, HoldoutResult};
use phasecp::plot::{line_plot_svg, scatter_svg};
use phasecp::similarity::{align_metadata, read_metadata_csv};
use phasecp::sym_ncp::ModelJson;
use phasecp::tensor::TensorJson;
use phasecp::{
    build_similarity_tensor, fit, rank_report, tsne_project, DenseTensor3, EmbeddingSet,
    RankReport, SymCpModel, TensorManifest,
};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const TENSOR_FILE: &str = "tensor.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_JSON: &str = "rank_report.json";
pub const REPORT_CSV: &str = "rank_report.csv";
pub const HOLDOUT_FILE: &str = "holdout.json";
pub const PROJECTION_CSV: &str = "projection.csv";

/// Embedded in every output so a file can be traced to the run that made it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(cfg: &PipelineConfig, stage: &str, seed: u64) -> Self {
        Self {
            stage: stage.to_string(),
            config_hash: cfg.hash(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn comment(&self) -> String {
        format!(
            "stage={} config_hash={} seed={} version={}",
            self.stage, self.config_hash, self.seed, self.version
        )
    }
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    #[serde(flatten)]
    tensor: TensorJson,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    #[serde(flatten)]
    manifest: TensorManifest,
    dims: [usize; 3],
    negative_entries: usize,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    #[serde(flatten)]
    model: ModelJson,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    #[serde(flatten)]
    report: RankReport,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct HoldoutDoc {
    rows: Vec<HoldoutResult>,
    provenance: Provenance,
}

fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.paths.out_dir.join(name)
}

fn ensure_out_dir(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.paths.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.paths.out_dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<()> {
    let mut bytes = if pretty {
        serde_json::to_vec_pretty(value)?
    } else {
        serde_json::to_vec(value)?
    };
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn svg_with_provenance(svg: String, prov: &Provenance) -> String {
    match svg.find('\n') {
        Some(pos) => format!(
            "{}\n<!-- {} -->{}",
            &svg[..pos],
            prov.comment(),
            &svg[pos..]
        ),
        None => svg,
    }
}

pub fn load_tensor(path: &Path) -> Result<DenseTensor3> {
    let doc: TensorJson = read_json(path)?;
    Ok(DenseTensor3::from_json(doc)?)
}

pub fn load_manifest(path: &Path) -> Result<TensorManifest> {
    read_json(path)
}

pub fn load_model(path: &Path) -> Result<SymCpModel> {
    let doc: ModelJson = read_json(path)?;
    Ok(SymCpModel::from_json(doc)?)
}

fn load_stage_tensor(cfg: &PipelineConfig) -> Result<DenseTensor3> {
    let path = out_path(cfg, TENSOR_FILE);
    if !path.exists() {
        bail!("{} not found; run `build-tensor` first", path.display());
    }
    load_tensor(&path)
}

#[derive(Debug, Clone)]
pub struct BuildSummary {
    pub dims: (usize, usize, usize),
    pub negative_entries: usize,
}

pub fn cmd_build_tensor(cfg: &PipelineConfig) -> Result<BuildSummary> {
    cfg.validate()?;
    let path = cfg
        .paths
        .embeddings
        .as_ref()
        .context("no embeddings path configured (paths.embeddings or --embeddings)")?;
    let file =
        fs::File::open(path).with_context(|| format!("opening embeddings {}", path.display()))?;
    let embeddings = EmbeddingSet::from_csv(file, &cfg.phases)
        .with_context(|| format!("parsing embeddings {}", path.display()))?;
    let tensor = build_similarity_tensor(&embeddings)?;
    let negative_entries = tensor.count_negative();
    if negative_entries > 0 {
        warn!("similarity tensor has {negative_entries} negative entries; they are passed through unmodified");
    }

    ensure_out_dir(cfg)?;
    let prov = Provenance::new(cfg, "build-tensor", cfg.seed);
    write_json(
        &out_path(cfg, TENSOR_FILE),
        &TensorDoc {
            tensor: tensor.to_json(),
            provenance: prov.clone(),
        },
        false,
    )?;
    let (n, _, p) = tensor.dims();
    write_json(
        &out_path(cfg, MANIFEST_FILE),
        &ManifestDoc {
            manifest: TensorManifest::from_embeddings(&embeddings),
            dims: [n, n, p],
            negative_entries,
            provenance: prov,
        },
        true,
    )?;
    println!("tensor dims: ({n}, {n}, {p})");
    println!("negative entries: {negative_entries}");
    Ok(BuildSummary {
        dims: tensor.dims(),
        negative_entries,
    })
}

pub fn cmd_fit(cfg: &PipelineConfig) -> Result<SymCpModel> {
    cfg.validate()?;
    let tensor = load_stage_tensor(cfg)?;
    cfg.validate_fit_rank(tensor.dims().0)?;
    let fit_cfg = cfg.fit_config();
    info!(
        "fitting rank {} with {} restarts x {} iterations",
        cfg.fit.rank, fit_cfg.restarts, fit_cfg.max_iters
    );
    let model = fit(&tensor, cfg.fit.rank, &fit_cfg, None)?;
    write_json(
        &out_path(cfg, MODEL_FILE),
        &ModelDoc {
            model: model.to_json(),
            provenance: Provenance::new(cfg, "fit", fit_cfg.seed),
        },
        true,
    )?;
    let rel = model.final_sse.sqrt() / tensor.frobenius_norm().max(f64::MIN_POSITIVE);
    println!(
        "rank {} fit: sse {:.6e} (relative error {:.4e})",
        model.rank(),
        model.final_sse,
        rel
    );
    println!("lambda: {:?}", model.weights());
    Ok(model)
}

pub fn cmd_diagnose(cfg: &PipelineConfig) -> Result<RankReport> {
    cfg.validate()?;
    let tensor = load_stage_tensor(cfg)?;
    cfg.validate_diagnostics_ranks(tensor.dims().0)?;
    let fit_cfg = cfg.diagnostics_fit_config();
    let report = rank_report(
        &tensor,
        &cfg.diagnostics.ranks,
        &fit_cfg,
        &cfg.holdout_config(),
    )?;
    let prov = Provenance::new(cfg, "diagnose", fit_cfg.seed);

    write_json(
        &out_path(cfg, REPORT_JSON),
        &ReportDoc {
            report: report.clone(),
            provenance: prov.clone(),
        },
        true,
    )?;
    let mut csv_bytes = format!("# {}\n", prov.comment()).into_bytes();
    report.write_csv(&mut csv_bytes)?;
    fs::write(out_path(cfg, REPORT_CSV), csv_bytes)?;

    let rank_axis = |f: &dyn Fn(&phasecp::RankRow) -> f64| -> Vec<(f64, f64)> {
        report.rows.iter().map(|r| (r.rank as f64, f(r))).collect()
    };
    let plots = [
        (
            "corcondia.svg",
            "CORCONDIA (%)",
            rank_axis(&|r| r.corcondia.unwrap_or(f64::NAN)),
        ),
        ("sse.svg", "Reconstruction SSE", rank_axis(&|r| r.sse)),
        (
            "holdout.svg",
            "Holdout RMSE (mean)",
            rank_axis(&|r| r.holdout_rmse_mean),
        ),
    ];
    for (file, title, points) in plots {
        let svg = line_plot_svg(title, "rank", title, &points);
        write_text(&out_path(cfg, file), &svg_with_provenance(svg, &prov))?;
    }

    println!("rank  corcondia     sse           rmse_mean     rmse_std");
    for r in &report.rows {
        let c = r.corcondia.map_or_else(
            || format!("{:?}", r.corcondia_status),
            |c| format!("{c:.2}"),
        );
        println!(
            "{:<5} {:<13} {:<13.6e} {:<13.6e} {:.6e}",
            r.rank, c, r.sse, r.holdout_rmse_mean, r.holdout_rmse_std
        );
    }
    Ok(report)
}

pub fn cmd_holdout(cfg: &PipelineConfig) -> Result<Vec<HoldoutResult>> {
    cfg.validate()?;
    let tensor = load_stage_tensor(cfg)?;
    cfg.validate_diagnostics_ranks(tensor.dims().0)?;
    let fit_cfg = cfg.diagnostics_fit_config();
    let mut ranks = cfg.diagnostics.ranks.clone();
    ranks.sort_unstable();
    ranks.dedup();
    let rows = ranks
        .iter()
        .map(|&r| holdout_validate(&tensor, r, &cfg.holdout_config(), &fit_cfg))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_json(
        &out_path(cfg, HOLDOUT_FILE),
        &HoldoutDoc {
            rows: rows.clone(),
            provenance: Provenance::new(cfg, "holdout", fit_cfg.seed),
        },
        true,
    )?;
    for r in &rows {
        println!(
            "rank {}: holdout RMSE {:.6e} +/- {:.6e}",
            r.rank, r.rmse_mean, r.rmse_std
        );
    }
    Ok(rows)
}

pub fn cmd_project(cfg: &PipelineConfig) -> Result<phasecp::Matrix> {
    cfg.validate()?;
    let model_path = out_path(cfg, MODEL_FILE);
    if !model_path.exists() {
        bail!("{} not found; run `fit` first", model_path.display());
    }
    let model = load_model(&model_path)?;
    let manifest = load_manifest(&out_path(cfg, MANIFEST_FILE))?;
    if manifest.videos.len() != model.video_loadings().nrows() {
        bail!(
            "manifest lists {} videos but the model has {} video loadings",
            manifest.videos.len(),
            model.video_loadings().nrows()
        );
    }
    let metadata = match &cfg.paths.metadata {
        Some(path) => {
            let file = fs::File::open(path)
                .with_context(|| format!("opening metadata {}", path.display()))?;
            let rows = read_metadata_csv(file)?;
            Some(align_metadata(&manifest.videos, &rows)?)
        }
        None => None,
    };

    let tsne_cfg = cfg.tsne_config();
    let embedding = tsne_project(model.video_loadings(), &tsne_cfg)?;
    let prov = Provenance::new(cfg, "project", tsne_cfg.seed);

    let mut bytes = format!("# {}\n", prov.comment()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        if metadata.is_some() {
            w.write_record(["video_id", "x", "y", "location", "time_of_day"])?;
        } else {
            w.write_record(["video_id", "x", "y"])?;
        }
        for (i, video) in manifest.videos.iter().enumerate() {
            let mut row = vec![
                video.clone(),
                embedding[(i, 0)].to_string(),
                embedding[(i, 1)].to_string(),
            ];
            if let Some(meta) = &metadata {
                row.push(meta[i].location.clone());
                row.push(meta[i].time_of_day.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    fs::write(out_path(cfg, PROJECTION_CSV), bytes)?;

    let points: Vec<(f64, f64)> = (0..embedding.nrows())
        .map(|i| (embedding[(i, 0)], embedding[(i, 1)]))
        .collect();
    match &metadata {
        Some(meta) => {
            let by_location: Vec<String> = meta.iter().map(|m| m.location.clone()).collect();
            let by_time: Vec<String> = meta.iter().map(|m| m.time_of_day.to_string()).collect();
            let svg = scatter_svg("t-SNE of video loadings (location)", &points, &by_location);
            write_text(
                &out_path(cfg, "projection_location.svg"),
                &svg_with_provenance(svg, &prov),
            )?;
            let svg = scatter_svg("t-SNE of video loadings (time of day)", &points, &by_time);
            write_text(
                &out_path(cfg, "projection_time_of_day.svg"),
                &svg_with_provenance(svg, &prov),
            )?;
        }
        None => {
            let svg = scatter_svg("t-SNE of video loadings", &points, &[]);
            write_text(
                &out_path(cfg, "projection.svg"),
                &svg_with_provenance(svg, &prov),
            )?;
        }
    }
    println!("projected {} videos to 2D", embedding.nrows());
    Ok(embedding)
}

/// Runs every stage in order; a failure is reported with the stage's name.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    cmd_build_tensor(cfg).context("stage `build-tensor` failed")?;
    cmd_fit(cfg).context("stage `fit` failed")?;
    cmd_diagnose(cfg).context("stage `diagnose` failed")?;
    cmd_project(cfg).context("stage `project` failed")?;
    let _ = std::io::stdout().flush();
    Ok(())
}
