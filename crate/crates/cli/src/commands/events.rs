//! Events command: turns forecast trajectory ensembles into event-timing
//! densities, scores them against the timings found in the ground truth, and
//! prints a datasets-by-models NLL table with the per-dataset winner flagged.
//!
//! Timings are peak indices of the chosen oscillatory mode. The truth's
//! timings come from its decomposed mode; each model's timing density is a
//! kernel estimate over the pooled peak indices of its trajectories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ordcast_core::baselines::{TrajectoryEnsemble, TrajectoryOrigin};
use ordcast_core::events::{
    kde_fit, timing_nll, trajectory_timings, true_timings, Bandwidth, ImfSelector,
};
use serde::Serialize;

use crate::artifacts::{dataset_for, load_forecast, write_timing_density};
use crate::commands::evaluate::truth_segment;

/// Event-detection and density parameters, shared by every artifact scored
/// in one run.
#[derive(Debug, Clone)]
pub struct EventParams {
    pub threshold: f64,
    pub min_distance: usize,
    /// Kernel bandwidth; data-driven when absent.
    pub bandwidth: Option<f64>,
    pub max_imfs: usize,
    /// Mode index into the truth's decomposition; the dominant-period mode
    /// when absent.
    pub imf: Option<usize>,
}

#[derive(Serialize)]
struct TimingTable {
    schema: String,
    models: Vec<String>,
    datasets: Vec<String>,
    /// `rows[dataset][model]`, aligned with the two name lists.
    nll: Vec<Vec<f64>>,
    /// Per-dataset winning model index.
    best: Vec<usize>,
    /// Datasets won per model, the "# BEST" row of the printed table.
    best_count: Vec<usize>,
}

pub const TIMING_TABLE_SCHEMA: &str = "ordcast-timing-nll-v1";

/// Scores every artifact and writes per-artifact timing densities plus the
/// combined NLL table (JSON next to a printed text table).
pub fn run(artifact_dirs: &[PathBuf], params: &EventParams, out_dir: &Path) -> Result<()> {
    if artifact_dirs.is_empty() {
        bail!("events needs at least one forecast artifact directory");
    }
    let selector = match params.imf {
        Some(i) => ImfSelector::Index(i),
        None => ImfSelector::DominantPeriod,
    };
    let bandwidth = match params.bandwidth {
        Some(h) => Bandwidth::Explicit(h),
        None => Bandwidth::Silverman,
    };

    // (dataset, model) -> NLL; BTreeMap keeps table order stable.
    let mut cells: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for dir in artifact_dirs {
        let artifact = load_forecast(dir)
            .with_context(|| format!("loading forecast artifact {}", dir.display()))?;
        let truth = truth_segment(&artifact)?;
        let _ = dataset_for(&artifact)?;

        let true_peaks = true_timings(
            &truth,
            selector,
            params.max_imfs,
            params.threshold,
            params.min_distance,
        )?;
        if true_peaks.is_empty() {
            bail!(
                "no events found in the test segment of {}",
                artifact.meta.dataset_id
            );
        }

        let ens = TrajectoryEnsemble::new(artifact.trajectories.clone(), TrajectoryOrigin::Model)?;
        let timings = trajectory_timings(&ens, params.threshold, params.min_distance)?;
        let density = kde_fit(&timings, bandwidth)?;

        let horizon = artifact.meta.horizon;
        let points: Vec<(f64, f64)> = (0..horizon)
            .map(|t| (t as f64, density.pdf(t as f64)))
            .collect();
        let density_path = artifact.dir.join("timing_density.csv");
        write_timing_density(&density_path, &points)?;

        let nll = timing_nll(&true_peaks, &density)?;
        cells
            .entry(artifact.meta.dataset_id.clone())
            .or_default()
            .insert(artifact.meta.model_id.clone(), nll);
    }

    let table = build_table(&cells)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let json_path = out_dir.join("timing_nll.json");
    let json = serde_json::to_string_pretty(&table)?;
    std::fs::write(&json_path, json + "\n")
        .with_context(|| format!("writing {}", json_path.display()))?;

    print!("{}", render_table(&table));
    println!("  table: {}", json_path.display());
    Ok(())
}

fn build_table(cells: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<TimingTable> {
    let mut models: Vec<String> = Vec::new();
    for row in cells.values() {
        for model in row.keys() {
            if !models.iter().any(|m| m == model) {
                models.push(model.clone());
            }
        }
    }
    let datasets: Vec<String> = cells.keys().cloned().collect();
    let mut nll = Vec::with_capacity(datasets.len());
    let mut best = Vec::with_capacity(datasets.len());
    let mut best_count = vec![0usize; models.len()];
    for dataset in &datasets {
        let row_map = &cells[dataset];
        let mut row = Vec::with_capacity(models.len());
        for model in &models {
            let Some(&v) = row_map.get(model) else {
                bail!("no forecast of {dataset} by {model}; the table needs a full grid");
            };
            row.push(v);
        }
        let winner = row
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).expect("losses are finite"))
            .map(|(i, _)| i)
            .expect("models list is nonempty");
        best.push(winner);
        best_count[winner] += 1;
        nll.push(row);
    }
    Ok(TimingTable {
        schema: TIMING_TABLE_SCHEMA.into(),
        models,
        datasets,
        nll,
        best,
        best_count,
    })
}

/// Text rendering: one row per dataset, the winner starred, and a final
/// "# BEST" row counting wins per model.
fn render_table(table: &TimingTable) -> String {
    let name_width = table
        .datasets
        .iter()
        .map(|d| d.len())
        .chain(["# BEST".len()].into_iter())
        .max()
        .unwrap_or(8)
        .max(8);
    let col_width = table.models.iter().map(|m| m.len()).max().unwrap_or(8).max(12);

    let mut out = String::new();
    out.push_str(&format!("{:name_width$}", "dataset"));
    for model in &table.models {
        out.push_str(&format!("  {model:>col_width$}"));
    }
    out.push('\n');
    for (di, dataset) in table.datasets.iter().enumerate() {
        out.push_str(&format!("{dataset:name_width$}"));
        for (mi, _) in table.models.iter().enumerate() {
            let v = table.nll[di][mi];
            let mark = if table.best[di] == mi { "*" } else { " " };
            let cell = format!("{v:.3}{mark}");
            out.push_str(&format!("  {cell:>col_width$}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("{:name_width$}", "# BEST"));
    for count in &table.best_count {
        out.push_str(&format!("  {count:>col_width$}"));
    }
    out.push('\n');
    out
}
