//! Forecast command: loads a trained checkpoint, conditions on the last
//! window of the dataset's history (train plus validation), and writes the
//! forecast artifact — full per-step densities, fixed quantile curves, and a
//! trajectory ensemble for event analysis.
//!
//! Randomness is drawn from fixed streams of the experiment seed, one per
//! use, so a rerun with the same config and checkpoint reproduces the
//! artifact byte for byte.

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ordcast_core::baselines::{
    correct_moments, fit_stepwise_gmm, gp_mc_trajectories, gp_with_hyper, kalman_forecast,
    moments_to_gaussian, ArModel, GpHyper, GpModel,
};
use ordcast_core::checkpoint::Checkpoint;
use ordcast_core::dist::ForecastDensities;
use ordcast_core::seq2seq::{
    mc_dropout_forecast, regression_rollouts, rollout_moments, Seq2SeqModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::artifacts::{
    write_forecast, Dataset, ForecastMeta, PartitionMeta, FORECAST_META_SCHEMA, QUANTILE_LEVELS,
};
use crate::config::ExperimentConfig;

/// Stream of the experiment seed used for the model's own sampling
/// (dropout masks, process-regression rollouts).
const ROLLOUT_STREAM: u64 = 4;
/// Stream used to draw trajectories from per-step densities when the model
/// family produces densities rather than sampled paths.
const TRAJECTORY_STREAM: u64 = 5;

/// Runs the forecast and writes the artifact into the output directory.
/// `ckpt_path` is the checkpoint written by the train command.
pub fn run(config: &ExperimentConfig, data: &Dataset, ckpt_path: &Path) -> Result<()> {
    let mut file = File::open(ckpt_path)
        .with_context(|| format!("opening checkpoint {}", ckpt_path.display()))?;
    let ckpt = Checkpoint::read_from(&mut file)?;

    let history = data.history();
    let p_h = config.horizon;
    let n_s = config.n_samples;

    let (densities, trajectories, model_id) = match ckpt.require("kind")? {
        "seq2seq" => {
            let model = Seq2SeqModel::from_checkpoint(&ckpt)?;
            let window = seed_window(history, model.lookback())?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(ROLLOUT_STREAM);
            match model.mode() {
                ordcast_core::seq2seq::OutputMode::Ordinal => {
                    let densities = mc_dropout_forecast(&model, window, p_h, n_s, &mut rng)?;
                    let trajectories = sample_trajectories(&densities, n_s, config.seed)?;
                    (densities, trajectories, "mordred")
                }
                ordcast_core::seq2seq::OutputMode::Regression => {
                    let rollouts = regression_rollouts(&model, window, p_h, n_s, &mut rng)?;
                    let densities = ForecastDensities::Gaussian {
                        steps: rollout_moments(&rollouts, p_h),
                    };
                    (densities, rollouts, "seq2seq-reg")
                }
            }
        }
        "ar" => {
            let model = load_ar(&ckpt)?;
            let densities = ForecastDensities::Gaussian {
                steps: kalman_forecast(&model, history, p_h)?,
            };
            let trajectories = sample_trajectories(&densities, n_s, config.seed)?;
            (densities, trajectories, "ar")
        }
        "gp" => {
            let model = load_gp(&ckpt)?;
            let window = seed_window(history, model.input_dim())?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(ROLLOUT_STREAM);
            let ens = gp_mc_trajectories(&model, window, p_h, n_s, &mut rng)?;
            let cli_model = ckpt.require("cli_model")?;
            let densities = match cli_model {
                "gp-gmm" => {
                    let k_max = ckpt.require_usize("k_max")?;
                    ForecastDensities::Gmm {
                        steps: fit_stepwise_gmm(&ens, k_max)?,
                    }
                }
                _ => moments_to_gaussian(&correct_moments(&ens)?)?,
            };
            let id = if cli_model == "gp-gmm" { "gp-gmm" } else { "gp-mc" };
            (densities, ens.trajectories, id)
        }
        other => bail!("checkpoint kind {other:?} is not a forecasting model"),
    };

    let (density_name, partition) = describe_density(&densities);
    let meta = ForecastMeta {
        schema: FORECAST_META_SCHEMA.into(),
        model_id: model_id.into(),
        dataset_id: data.meta.dataset_id.clone(),
        dataset_path: data.csv_path.display().to_string(),
        seed: config.seed,
        lookback: config.lookback,
        horizon: p_h,
        n_samples: n_s,
        density: density_name.into(),
        partition,
        test_start: data.meta.split.val_end,
        quantile_levels: QUANTILE_LEVELS.to_vec(),
    };

    let out_dir = Path::new(&config.output_dir);
    write_forecast(out_dir, &meta, &densities, &trajectories)?;
    println!(
        "forecast: {} on {}, horizon {}, {} trajectories",
        model_id, data.meta.dataset_id, p_h, trajectories.len()
    );
    println!("  artifact: {}", out_dir.display());
    Ok(())
}

/// Last `lookback` samples of the history, the window a forecast starts from.
fn seed_window(history: &[f64], lookback: usize) -> Result<&[f64]> {
    if history.len() < lookback {
        bail!(
            "history of length {} is shorter than the model's window of {}",
            history.len(),
            lookback
        );
    }
    Ok(&history[history.len() - lookback..])
}

/// Draws `n_s` trajectories by sampling each horizon step independently from
/// its forecast density. Step densities already aggregate over the model's
/// sampled futures, so these paths carry the marginal uncertainty that event
/// timing pools over.
fn sample_trajectories(
    densities: &ForecastDensities,
    n_s: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAJECTORY_STREAM);
    let p_h = densities.horizon();
    let mut rows = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        let mut row = Vec::with_capacity(p_h);
        for k in 0..p_h {
            row.push(densities.sample_at(k, &mut rng)?);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn describe_density(densities: &ForecastDensities) -> (&'static str, Option<PartitionMeta>) {
    match densities {
        ForecastDensities::Categorical { partition, .. } => {
            let (lo, hi) = partition.bounds();
            (
                "categorical",
                Some(PartitionMeta {
                    lo,
                    hi,
                    bins: partition.bin_count(),
                }),
            )
        }
        ForecastDensities::Gaussian { .. } => ("gaussian", None),
        ForecastDensities::Gmm { .. } => ("gmm", None),
    }
}

fn load_ar(ckpt: &Checkpoint) -> Result<ArModel> {
    let coeffs = ckpt.tensor("coeffs")?.data.clone();
    Ok(ArModel {
        coeffs,
        innovation_var: ckpt.require_f64("innovation_var")?,
        obs_noise_var: ckpt.require_f64("obs_noise_var")?,
    })
}

fn load_gp(ckpt: &Checkpoint) -> Result<GpModel> {
    let lengthscales = ckpt.tensor("lengthscales")?.data.clone();
    let hyper = GpHyper::new(
        ckpt.require_f64("signal_var")?,
        lengthscales,
        ckpt.require_f64("noise_var")?,
    )?;
    let w = ckpt.tensor("windows")?;
    let targets = &ckpt.tensor("targets")?.data;
    let windows: Vec<&[f64]> = w.data.chunks(w.cols).collect();
    Ok(gp_with_hyper(&windows, targets, &hyper)?)
}
