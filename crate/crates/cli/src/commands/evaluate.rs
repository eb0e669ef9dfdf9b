//! Evaluate command: scores forecast artifacts against the held-out test
//! segment of their datasets and writes the metric table plus the
//! cross-model rank aggregation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ordcast_core::metrics::{evaluate_forecast, rank_tables, MetricsReport};

use crate::artifacts::{dataset_for, load_forecast, ForecastArtifact};

/// Loads every artifact, scores it, and writes `metrics.csv` and
/// `rank_tables.json` into `out_dir`.
pub fn run(artifact_dirs: &[PathBuf], out_dir: &Path) -> Result<()> {
    if artifact_dirs.is_empty() {
        bail!("evaluate needs at least one forecast artifact directory");
    }
    let mut reports = Vec::with_capacity(artifact_dirs.len());
    for dir in artifact_dirs {
        let artifact = load_forecast(dir)
            .with_context(|| format!("loading forecast artifact {}", dir.display()))?;
        let truth = truth_segment(&artifact)?;
        let report = evaluate_forecast(
            &artifact.meta.model_id,
            &artifact.meta.dataset_id,
            &truth,
            &artifact.densities,
        )?;
        reports.push(report);
    }

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let mut csv = String::from(MetricsReport::csv_header());
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let csv_path = out_dir.join("metrics.csv");
    std::fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;

    let tables = rank_tables(&reports)?;
    let json_path = out_dir.join("rank_tables.json");
    let json = serde_json::to_string_pretty(&tables)?;
    std::fs::write(&json_path, json + "\n")
        .with_context(|| format!("writing {}", json_path.display()))?;

    println!("evaluated {} forecast(s)", reports.len());
    println!("  metrics: {}", csv_path.display());
    println!("  ranks:   {}", json_path.display());
    Ok(())
}

/// The first `horizon` samples of the artifact's test segment: the ground
/// truth the forecast densities line up against step for step.
pub fn truth_segment(artifact: &ForecastArtifact) -> Result<Vec<f64>> {
    let data = dataset_for(artifact)?;
    let test = data.test();
    let p_h = artifact.meta.horizon;
    if test.len() < p_h {
        bail!(
            "test segment of {} has {} samples but the forecast horizon is {}",
            artifact.meta.dataset_id,
            test.len(),
            p_h
        );
    }
    if artifact.meta.test_start != data.meta.split.val_end {
        bail!(
            "forecast starts at index {} but the dataset's test segment starts at {}",
            artifact.meta.test_start,
            data.meta.split.val_end
        );
    }
    Ok(test[..p_h].to_vec())
}
