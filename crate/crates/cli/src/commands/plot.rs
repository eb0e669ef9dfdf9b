//! Plot command: renders a forecast artifact as an SVG fan chart — truth
//! overlay, median forecast, and the central 95% band, with the event-timing
//! density as a subplot when the artifact has one.

use std::path::Path;

use anyhow::{Context, Result};

use crate::artifacts::{load_forecast, read_timing_density};
use crate::commands::evaluate::truth_segment;
use crate::svg::{render, FanChart};

/// Renders `artifact_dir` to `out_path`. The timing subplot appears when
/// `timing_density.csv` exists in the artifact (the events command writes
/// it).
pub fn run(artifact_dir: &Path, out_path: &Path) -> Result<()> {
    let artifact = load_forecast(artifact_dir)
        .with_context(|| format!("loading forecast artifact {}", artifact_dir.display()))?;
    let truth = truth_segment(&artifact)?;

    let p_h = artifact.meta.horizon;
    let mut median = Vec::with_capacity(p_h);
    let mut lo = Vec::with_capacity(p_h);
    let mut hi = Vec::with_capacity(p_h);
    for k in 0..p_h {
        median.push(artifact.densities.quantile_at(k, 0.5)?);
        lo.push(artifact.densities.quantile_at(k, 0.025)?);
        hi.push(artifact.densities.quantile_at(k, 0.975)?);
    }

    let timing_path = artifact.dir.join("timing_density.csv");
    let timing = if timing_path.exists() {
        Some(read_timing_density(&timing_path)?)
    } else {
        None
    };

    let title = format!(
        "{} on {} (horizon {})",
        artifact.meta.model_id, artifact.meta.dataset_id, p_h
    );
    let chart = FanChart {
        title: &title,
        truth: &truth,
        median: &median,
        lo: &lo,
        hi: &hi,
        timing: timing.as_deref(),
    };
    let svg = render(&chart);
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(out_path, svg)
        .with_context(|| format!("writing {}", out_path.display()))?;
    println!("plot: {}", out_path.display());
    Ok(())
}
