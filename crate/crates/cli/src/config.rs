//! Experiment configuration: JSON schema, defaults, and grid expansion.
//!
//! Hyperparameter fields accept either a scalar or an array; arrays define
//! a search grid whose cartesian product is trained cell by cell, selecting
//! the best validation loss. Defaults follow the benchmark's standard
//! search sets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA: &str = "ordcast-experiment-v1";

pub const MODEL_IDS: [&str; 5] = ["mordred", "seq2seq-reg", "ar", "gp-mc", "gp-gmm"];

/// A scalar-or-array field; an array spells out a search grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    Scalar(T),
    List(Vec<T>),
}

impl<T: Clone> Grid<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Grid::Scalar(v) => vec![v.clone()],
            Grid::List(vs) => vs.clone(),
        }
    }
}

/// Dataset source: a previously written artifact or an inline generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Csv(String),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub system: String,
    #[serde(default)]
    pub n: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub detrend: bool,
    #[serde(default)]
    pub seasonal_period: Option<usize>,
    /// Std of regularizing white noise added to the standardized series.
    #[serde(default)]
    pub noise_std: f64,
}

fn default_units() -> Grid<usize> {
    Grid::List(vec![64, 128, 256, 320])
}
fn default_p_drop() -> Grid<f64> {
    Grid::List(vec![0.25, 0.35, 0.5])
}
fn default_lambda() -> Grid<f64> {
    Grid::List(vec![1e-6, 1e-7, 1e-8])
}
fn default_bins() -> Grid<usize> {
    Grid::Scalar(300)
}
fn default_ar_order() -> Grid<usize> {
    Grid::List(vec![16, 32, 64])
}
fn default_k_max() -> usize {
    5
}
fn default_pad() -> f64 {
    0.0
}
fn default_gp_subset() -> usize {
    2000
}

/// Model hyperparameters. Unused fields for a given model id are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperConfig {
    /// LSTM units per direction (grid allowed).
    pub n_units: Grid<usize>,
    /// Dropout probability (grid allowed).
    pub p_drop: Grid<f64>,
    /// L2 penalty on weight matrices (grid allowed).
    pub lambda_l2: Grid<f64>,
    /// Ordinal bin count (grid allowed; mordred only).
    pub bins: Grid<usize>,
    /// Extra dropout mask on the encoder-to-decoder handoff.
    pub mask_handoff: bool,
    /// Fractional padding of the fitted bin range on each side.
    pub pad_fraction: f64,
    /// Autoregressive order (grid allowed; ar only).
    pub ar_order: Grid<usize>,
    /// Mixture component cap (gp-gmm only).
    pub k_max: usize,
    /// Cap on GP training windows (evenly strided subset).
    pub gp_subset: usize,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            n_units: default_units(),
            p_drop: default_p_drop(),
            lambda_l2: default_lambda(),
            bins: default_bins(),
            mask_handoff: false,
            pad_fraction: default_pad(),
            ar_order: default_ar_order(),
            k_max: default_k_max(),
            gp_subset: default_gp_subset(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 50,
            batch_size: 256,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: String,
    pub dataset: DatasetSource,
    pub model: String,
    #[serde(default = "default_lookback")]
    pub lookback: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// MC-dropout samples, GP trajectories, and artifact trajectory count.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    pub seed: u64,
    pub output_dir: String,
    #[serde(default)]
    pub hyper: HyperConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_lookback() -> usize {
    100
}
fn default_horizon() -> usize {
    1000
}
fn default_n_samples() -> usize {
    100
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate(path)?;
        Ok(cfg)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            bail!(
                "{}: unsupported config schema {:?} (expected {CONFIG_SCHEMA:?})",
                path.display(),
                self.schema
            );
        }
        if !MODEL_IDS.contains(&self.model.as_str()) {
            bail!(
                "{}: unknown model {:?}; valid ids: {}",
                path.display(),
                self.model,
                MODEL_IDS.join(", ")
            );
        }
        if let DatasetSource::Csv(csv) = &self.dataset {
            let p = Path::new(csv);
            if !p.exists() {
                bail!("{}: dataset file {csv:?} does not exist", path.display());
            }
        }
        if self.lookback == 0 || self.horizon == 0 || self.n_samples == 0 {
            bail!(
                "{}: lookback, horizon and n_samples must be positive",
                path.display()
            );
        }
        Ok(())
    }
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridCell {
    pub n_units: usize,
    pub p_drop: f64,
    pub lambda_l2: f64,
    pub bins: usize,
    pub ar_order: usize,
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n_units={} p_drop={} lambda_l2={} bins={} ar_order={}",
            self.n_units, self.p_drop, self.lambda_l2, self.bins, self.ar_order
        )
    }
}

/// Cartesian product of the fields the given model actually searches over.
/// Cells are enumerated in row-major order of the config arrays, so cell
/// indices are stable across runs.
pub fn expand_grid(model: &str, hyper: &HyperConfig) -> Vec<GridCell> {
    let fixed = GridCell {
        n_units: hyper.n_units.values()[0],
        p_drop: hyper.p_drop.values()[0],
        lambda_l2: hyper.lambda_l2.values()[0],
        bins: hyper.bins.values()[0],
        ar_order: hyper.ar_order.values()[0],
    };
    match model {
        "mordred" => {
            let mut cells = Vec::new();
            for &n_units in &hyper.n_units.values() {
                for &p_drop in &hyper.p_drop.values() {
                    for &lambda_l2 in &hyper.lambda_l2.values() {
                        for &bins in &hyper.bins.values() {
                            cells.push(GridCell {
                                n_units,
                                p_drop,
                                lambda_l2,
                                bins,
                                ..fixed.clone()
                            });
                        }
                    }
                }
            }
            cells
        }
        "seq2seq-reg" => {
            let mut cells = Vec::new();
            for &n_units in &hyper.n_units.values() {
                for &p_drop in &hyper.p_drop.values() {
                    for &lambda_l2 in &hyper.lambda_l2.values() {
                        cells.push(GridCell {
                            n_units,
                            p_drop,
                            lambda_l2,
                            ..fixed.clone()
                        });
                    }
                }
            }
            cells
        }
        "ar" => hyper
            .ar_order
            .values()
            .iter()
            .map(|&ar_order| GridCell {
                ar_order,
                ..fixed.clone()
            })
            .collect(),
        // GP hyperparameters are optimized inside the fit itself.
        _ => vec![fixed],
    }
}
