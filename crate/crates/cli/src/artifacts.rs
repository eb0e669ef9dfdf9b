//! On-disk artifact formats: datasets, forecasts, and their metadata.
//!
//! Every file is self-describing (a schema tag in its first line or field)
//! and carries no timestamps, so a rerun with the same inputs is
//! byte-identical. Floats are written with shortest-round-trip formatting
//! and parse back to the same bits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ordcast_core::checkpoint::format_f64;
use ordcast_core::datagen::TransformRecord;
use ordcast_core::dist::ForecastDensities;
use ordcast_core::{BinPartition, CategoricalDensity, Gaussian, GmmDensity};

pub const DATASET_SCHEMA: &str = "ordcast-dataset-v1";
pub const DATASET_META_SCHEMA: &str = "ordcast-dataset-meta-v1";
pub const FORECAST_SCHEMA: &str = "ordcast-forecast-v1";
pub const FORECAST_META_SCHEMA: &str = "ordcast-forecast-meta-v1";
pub const TRAJECTORY_SCHEMA: &str = "ordcast-trajectories-v1";
pub const TIMING_SCHEMA: &str = "ordcast-timing-density-v1";

/// Quantile levels written to `quantiles.csv`, in column order.
pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Generator settings recorded alongside a synthesized dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemMeta {
    pub id: String,
    pub params: BTreeMap<String, f64>,
    pub initial: Vec<f64>,
    pub dt: f64,
    pub stride: usize,
    pub burn_in: usize,
    pub channel: usize,
    pub length: usize,
}

/// Linear/seasonal detrend constants, mirrored for JSON round-tripping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetrendMeta {
    pub slope: f64,
    pub intercept: f64,
    pub seasonal: Option<Vec<f64>>,
    pub mean: f64,
    pub std: f64,
}

impl From<&TransformRecord> for DetrendMeta {
    fn from(r: &TransformRecord) -> Self {
        DetrendMeta {
            slope: r.slope,
            intercept: r.intercept,
            seasonal: r.seasonal.clone(),
            mean: r.mean,
            std: r.std,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitMeta {
    /// First index of the validation segment.
    pub train_end: usize,
    /// First index of the test segment.
    pub val_end: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizeMeta {
    pub mean: f64,
    pub std: f64,
}

/// Sidecar metadata for a dataset artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema: String,
    pub dataset_id: String,
    pub seed: u64,
    /// Present when the series came from the built-in generators.
    pub system: Option<SystemMeta>,
    /// Present when linear/seasonal detrending ran before the split.
    pub detrend: Option<DetrendMeta>,
    pub noise_std: f64,
    pub split: SplitMeta,
    /// Train-split constants the stored series is standardized by.
    pub standardize: StandardizeMeta,
}

/// A dataset artifact loaded back into memory: the standardized series plus
/// its sidecar metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: Vec<f64>,
    pub meta: DatasetMeta,
    pub csv_path: PathBuf,
}

impl Dataset {
    pub fn train(&self) -> &[f64] {
        &self.series[..self.meta.split.train_end]
    }

    pub fn validation(&self) -> &[f64] {
        &self.series[self.meta.split.train_end..self.meta.split.val_end]
    }

    pub fn test(&self) -> &[f64] {
        &self.series[self.meta.split.val_end..]
    }

    /// Everything up to the test boundary, in order: the history a
    /// forecast conditions on.
    pub fn history(&self) -> &[f64] {
        &self.series[..self.meta.split.val_end]
    }
}

pub fn meta_path_for(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Writes `series` as a two-column CSV plus its JSON sidecar.
pub fn write_dataset(dir: &Path, series: &[f64], meta: &DatasetMeta) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let csv_path = dir.join(format!("{}.csv", meta.dataset_id));
    let mut out = String::with_capacity(series.len() * 24);
    out.push_str(&format!("# schema: {DATASET_SCHEMA}\n"));
    out.push_str("index,value\n");
    for (i, &v) in series.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", format_f64(v)));
    }
    fs::write(&csv_path, out)
        .with_context(|| format!("writing dataset CSV {}", csv_path.display()))?;
    let meta_json = serde_json::to_string_pretty(meta)?;
    fs::write(meta_path_for(&csv_path), meta_json + "\n")
        .with_context(|| format!("writing dataset metadata for {}", csv_path.display()))?;
    Ok(csv_path)
}

/// Loads a dataset artifact (CSV plus required sidecar).
pub fn load_dataset(csv_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(csv_path)
        .with_context(|| format!("reading dataset {}", csv_path.display()))?;
    let mut series = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("index,") {
            continue;
        }
        let value = line
            .split(',')
            .nth(1)
            .with_context(|| format!("{}:{}: expected index,value", csv_path.display(), lineno + 1))?;
        series.push(value.trim().parse::<f64>().with_context(|| {
            format!("{}:{}: bad float {value:?}", csv_path.display(), lineno + 1)
        })?);
    }
    let meta_path = meta_path_for(csv_path);
    let meta: DatasetMeta = serde_json::from_str(
        &fs::read_to_string(&meta_path)
            .with_context(|| format!("reading dataset sidecar {}", meta_path.display()))?,
    )
    .with_context(|| format!("parsing {}", meta_path.display()))?;
    if meta.schema != DATASET_META_SCHEMA {
        bail!(
            "unsupported dataset metadata schema {:?} in {}",
            meta.schema,
            meta_path.display()
        );
    }
    if meta.split.n != series.len() {
        bail!(
            "dataset {} has {} rows but its sidecar records n = {}",
            csv_path.display(),
            series.len(),
            meta.split.n
        );
    }
    Ok(Dataset {
        series,
        meta,
        csv_path: csv_path.to_path_buf(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionMeta {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

/// Sidecar metadata for a forecast artifact directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastMeta {
    pub schema: String,
    pub model_id: String,
    pub dataset_id: String,
    /// Path of the dataset artifact the forecast conditioned on, as given
    /// on the command line.
    pub dataset_path: String,
    pub seed: u64,
    pub lookback: usize,
    pub horizon: usize,
    pub n_samples: usize,
    /// "categorical" | "gaussian" | "gmm"
    pub density: String,
    pub partition: Option<PartitionMeta>,
    /// Index of the first forecast step in the dataset series.
    pub test_start: usize,
    pub quantile_levels: Vec<f64>,
}

/// A forecast artifact loaded back into memory.
#[derive(Debug)]
pub struct ForecastArtifact {
    pub meta: ForecastMeta,
    pub densities: ForecastDensities,
    pub trajectories: Vec<Vec<f64>>,
    pub dir: PathBuf,
}

fn density_kind(d: &ForecastDensities) -> &'static str {
    match d {
        ForecastDensities::Categorical { .. } => "categorical",
        ForecastDensities::Gaussian { .. } => "gaussian",
        ForecastDensities::Gmm { .. } => "gmm",
    }
}

fn write_forecast_csv(path: &Path, densities: &ForecastDensities) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# schema: {FORECAST_SCHEMA} kind={}\n",
        density_kind(densities)
    ));
    match densities {
        ForecastDensities::Categorical { partition, steps } => {
            let m = partition.bin_count();
            out.push_str("step");
            for j in 0..m {
                out.push_str(&format!(",p_{j}"));
            }
            out.push('\n');
            for (k, density) in steps.iter().enumerate() {
                out.push_str(&k.to_string());
                for &p in density.probs() {
                    out.push(',');
                    out.push_str(&format_f64(p));
                }
                out.push('\n');
            }
        }
        ForecastDensities::Gaussian { steps } => {
            out.push_str("step,mean,var\n");
            for (k, g) in steps.iter().enumerate() {
                out.push_str(&format!(
                    "{k},{},{}\n",
                    format_f64(g.mean),
                    format_f64(g.var)
                ));
            }
        }
        ForecastDensities::Gmm { steps } => {
            out.push_str("step,component,weight,mean,var\n");
            for (k, gmm) in steps.iter().enumerate() {
                for c in 0..gmm.component_count() {
                    out.push_str(&format!(
                        "{k},{c},{},{},{}\n",
                        format_f64(gmm.weights[c]),
                        format_f64(gmm.means[c]),
                        format_f64(gmm.vars[c])
                    ));
                }
            }
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_quantiles_csv(path: &Path, densities: &ForecastDensities) -> Result<()> {
    let horizon = densities.horizon();
    let mut out = String::new();
    out.push_str(&format!("# schema: {FORECAST_SCHEMA} kind=quantiles\n"));
    out.push_str("step");
    for alpha in QUANTILE_LEVELS {
        out.push_str(&format!(",q_{alpha}"));
    }
    out.push('\n');
    for k in 0..horizon {
        out.push_str(&k.to_string());
        for alpha in QUANTILE_LEVELS {
            let q = densities.quantile_at(k, alpha)?;
            out.push(',');
            out.push_str(&format_f64(q));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_trajectories_csv(path: &Path, trajectories: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# schema: {TRAJECTORY_SCHEMA}\n"));
    let horizon = trajectories.first().map_or(0, |t| t.len());
    out.push_str("traj");
    for k in 0..horizon {
        out.push_str(&format!(",x_{k}"));
    }
    out.push('\n');
    for (i, traj) in trajectories.iter().enumerate() {
        out.push_str(&i.to_string());
        for &v in traj {
            out.push(',');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes a complete forecast artifact directory: per-step densities,
/// quantile curves, sampled trajectories, and metadata.
pub fn write_forecast(
    dir: &Path,
    meta: &ForecastMeta,
    densities: &ForecastDensities,
    trajectories: &[Vec<f64>],
) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating forecast directory {}", dir.display()))?;
    write_forecast_csv(&dir.join("forecast.csv"), densities)?;
    write_quantiles_csv(&dir.join("quantiles.csv"), densities)?;
    write_trajectories_csv(&dir.join("trajectories.csv"), trajectories)?;
    let meta_json = serde_json::to_string_pretty(meta)?;
    fs::write(dir.join("metadata.json"), meta_json + "\n")
        .with_context(|| format!("writing forecast metadata in {}", dir.display()))?;
    Ok(())
}

fn data_rows(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .skip(1)
}

fn parse_fields(line: &str, path: &Path) -> Result<Vec<f64>> {
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .with_context(|| format!("{}: bad float {f:?}", path.display()))
        })
        .collect()
}

fn read_forecast_csv(path: &Path, meta: &ForecastMeta) -> Result<ForecastDensities> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match meta.density.as_str() {
        "categorical" => {
            let p = meta
                .partition
                .as_ref()
                .context("categorical forecast metadata lacks its bin partition")?;
            let partition = BinPartition::new(p.lo, p.hi, p.bins)?;
            let mut steps = Vec::new();
            for line in data_rows(&text) {
                let fields = parse_fields(line, path)?;
                steps.push(CategoricalDensity::new(fields[1..].to_vec())?);
            }
            Ok(ForecastDensities::Categorical { partition, steps })
        }
        "gaussian" => {
            let mut steps = Vec::new();
            for line in data_rows(&text) {
                let fields = parse_fields(line, path)?;
                steps.push(Gaussian::new(fields[1], fields[2])?);
            }
            Ok(ForecastDensities::Gaussian { steps })
        }
        "gmm" => {
            let mut per_step: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
            for line in data_rows(&text) {
                let fields = parse_fields(line, path)?;
                let step = fields[0] as usize;
                if step == per_step.len() {
                    per_step.push((Vec::new(), Vec::new(), Vec::new()));
                }
                let slot = per_step
                    .get_mut(step)
                    .with_context(|| format!("{}: step {step} out of order", path.display()))?;
                slot.0.push(fields[2]);
                slot.1.push(fields[3]);
                slot.2.push(fields[4]);
            }
            let steps = per_step
                .into_iter()
                .map(|(w, m, v)| GmmDensity::new(w, m, v))
                .collect::<ordcast_core::Result<Vec<_>>>()?;
            Ok(ForecastDensities::Gmm { steps })
        }
        other => bail!("unknown forecast density kind {other:?}"),
    }
}

fn read_trajectories_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for line in data_rows(&text) {
        let fields = parse_fields(line, path)?;
        rows.push(fields[1..].to_vec());
    }
    Ok(rows)
}

/// Loads a forecast artifact directory written by [`write_forecast`].
pub fn load_forecast(dir: &Path) -> Result<ForecastArtifact> {
    let meta_path = dir.join("metadata.json");
    let meta: ForecastMeta = serde_json::from_str(
        &fs::read_to_string(&meta_path)
            .with_context(|| format!("reading forecast metadata {}", meta_path.display()))?,
    )
    .with_context(|| format!("parsing {}", meta_path.display()))?;
    if meta.schema != FORECAST_META_SCHEMA {
        bail!(
            "unsupported forecast metadata schema {:?} in {}",
            meta.schema,
            meta_path.display()
        );
    }
    let densities = read_forecast_csv(&dir.join("forecast.csv"), &meta)?;
    let trajectories = read_trajectories_csv(&dir.join("trajectories.csv"))?;
    Ok(ForecastArtifact {
        meta,
        densities,
        trajectories,
        dir: dir.to_path_buf(),
    })
}

/// Resolves the dataset referenced by a forecast artifact: first as given,
/// then relative to the artifact directory.
pub fn dataset_for(artifact: &ForecastArtifact) -> Result<Dataset> {
    let direct = PathBuf::from(&artifact.meta.dataset_path);
    if direct.exists() {
        return load_dataset(&direct);
    }
    let relative = artifact.dir.join(&artifact.meta.dataset_path);
    if relative.exists() {
        return load_dataset(&relative);
    }
    bail!(
        "dataset {} referenced by {} not found",
        artifact.meta.dataset_path,
        artifact.dir.display()
    )
}

/// Writes a timing density as a two-column (t, p_t) CSV.
pub fn write_timing_density(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# schema: {TIMING_SCHEMA}\n"));
    out.push_str("t,p_t\n");
    for (t, p) in points {
        out.push_str(&format!("{},{}\n", format_f64(*t), format_f64(*p)));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a timing density CSV back as (t, p_t) pairs.
pub fn read_timing_density(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for row in data_rows(&text) {
        let fields = parse_fields(row, path)?;
        if fields.len() != 2 {
            bail!("{}: expected t,p_t rows", path.display());
        }
        points.push((fields[0], fields[1]));
    }
    Ok(points)
}
