//! Grid-search training: fits every cell of the configured hyperparameter
//! grid, selects the cell with the lowest validation loss, and persists the
//! winning model plus a log covering the whole grid.
//!
//! Cell seeds are pre-drawn from a dedicated stream of the experiment seed
//! in cell-index order, so each cell trains identically no matter how many
//! cells run or in what order the thread pool schedules them. Failed cells
//! stay in the log with their error text; the run only fails if every cell
//! does.

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ordcast_core::baselines::{
    fit_ar, fit_gp, gp_predict, kalman_filter_loglik, strided_subset, ArModel, GpHyper, GpModel,
};
use ordcast_core::checkpoint::{Checkpoint, NamedTensor};
use ordcast_core::dist::Gaussian;
use ordcast_core::ordinal::BinPartition;
use ordcast_core::seq2seq::{
    make_windows, train, Seq2SeqModel, TrainingConfig, TrainingLog,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::Dataset;
use crate::config::{expand_grid, ExperimentConfig, GridCell};

/// Stream of the experiment seed that cell seeds are drawn from.
const CELL_SEED_STREAM: u64 = 3;

pub const TRAIN_LOG_SCHEMA: &str = "ordcast-train-log-v1";

/// One fitted grid cell, ready to be persisted.
enum FittedModel {
    Seq2Seq(Box<Seq2SeqModel>, TrainingLog),
    Ar(ArModel),
    Gp {
        model: GpModel,
        windows: Vec<Vec<f64>>,
        targets: Vec<f64>,
    },
}

#[derive(Serialize)]
struct CellRecord {
    cell: usize,
    hyper: GridCell,
    seed: u64,
    status: String,
    val_loss: Option<f64>,
}

#[derive(Serialize)]
struct TrainLogFile {
    schema: String,
    model_id: String,
    dataset_id: String,
    lookback: usize,
    seed: u64,
    cells: Vec<CellRecord>,
    winner_cell: usize,
    winner_val_loss: f64,
    /// Per-epoch curves of the winning cell; absent for closed-form fits.
    epochs: Option<TrainingLog>,
}

/// Trains the configured grid on `data` and writes `model.ckpt` and
/// `train_log.json` into the experiment's output directory.
pub fn run(config: &ExperimentConfig, data: &Dataset) -> Result<()> {
    let cells = expand_grid(&config.model, &config.hyper);
    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed);
    seed_rng.set_stream(CELL_SEED_STREAM);
    let cell_seeds: Vec<u64> = (0..cells.len()).map(|_| seed_rng.gen()).collect();

    let outcomes: Vec<Result<(f64, FittedModel)>> = cells
        .par_iter()
        .zip(&cell_seeds)
        .map(|(cell, &seed)| train_cell(config, data, cell, seed))
        .collect();

    let mut records = Vec::with_capacity(cells.len());
    let mut fits: Vec<Option<(f64, FittedModel)>> = Vec::with_capacity(cells.len());
    let mut first_err: Option<anyhow::Error> = None;
    for (idx, (outcome, (cell, &seed))) in outcomes
        .into_iter()
        .zip(cells.iter().zip(&cell_seeds))
        .enumerate()
    {
        match outcome {
            Ok((val_loss, fitted)) => {
                records.push(CellRecord {
                    cell: idx,
                    hyper: cell.clone(),
                    seed,
                    status: "ok".into(),
                    val_loss: Some(val_loss),
                });
                fits.push(Some((val_loss, fitted)));
            }
            Err(e) => {
                records.push(CellRecord {
                    cell: idx,
                    hyper: cell.clone(),
                    seed,
                    status: format!("{e:#}"),
                    val_loss: None,
                });
                fits.push(None);
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }

    let mut winner: Option<(usize, f64)> = None;
    for (idx, fit) in fits.iter().enumerate() {
        if let Some((val_loss, _)) = fit {
            if val_loss.is_finite() && winner.map_or(true, |(_, best)| *val_loss < best) {
                winner = Some((idx, *val_loss));
            }
        }
    }
    let Some((winner_cell, winner_val_loss)) = winner else {
        let err = first_err.unwrap_or_else(|| anyhow::anyhow!("no grid cells produced a model"));
        return Err(err.context("every grid cell failed to train"));
    };

    let (_, fitted) = fits[winner_cell]
        .take()
        .expect("winner index points at a successful fit");
    let epochs = match &fitted {
        FittedModel::Seq2Seq(_, log) => Some(log.clone()),
        _ => None,
    };

    let out_dir = Path::new(&config.output_dir);
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let ckpt = winner_checkpoint(config, winner_cell, cell_seeds[winner_cell], &fitted)?;
    let ckpt_path = out_dir.join("model.ckpt");
    let mut file = File::create(&ckpt_path)
        .with_context(|| format!("creating {}", ckpt_path.display()))?;
    ckpt.write_to(&mut file)?;

    let log_file = TrainLogFile {
        schema: TRAIN_LOG_SCHEMA.into(),
        model_id: config.model.clone(),
        dataset_id: data.meta.dataset_id.clone(),
        lookback: config.lookback,
        seed: config.seed,
        cells: records,
        winner_cell,
        winner_val_loss,
        epochs,
    };
    let log_path = out_dir.join("train_log.json");
    let json = serde_json::to_string_pretty(&log_file)?;
    std::fs::write(&log_path, json + "\n")
        .with_context(|| format!("writing {}", log_path.display()))?;

    println!(
        "trained {} cell(s) of {} on {}; winner cell {} (val loss {:.6})",
        cells.len(),
        config.model,
        data.meta.dataset_id,
        winner_cell,
        winner_val_loss
    );
    println!("  checkpoint: {}", ckpt_path.display());
    println!("  log:        {}", log_path.display());
    Ok(())
}

/// Fits one grid cell and returns its validation loss next to the model.
/// The loss is a mean per-sample negative log-likelihood for every model
/// family, so values are comparable across cells of one family.
fn train_cell(
    config: &ExperimentConfig,
    data: &Dataset,
    cell: &GridCell,
    seed: u64,
) -> Result<(f64, FittedModel)> {
    match config.model.as_str() {
        "mordred" | "seq2seq-reg" => {
            let mut model = if config.model == "mordred" {
                let partition =
                    BinPartition::fit(data.train(), cell.bins, config.hyper.pad_fraction)?;
                Seq2SeqModel::new_ordinal(
                    partition,
                    cell.n_units,
                    config.lookback,
                    cell.p_drop,
                    config.hyper.mask_handoff,
                    seed,
                )?
            } else {
                Seq2SeqModel::new_regression(
                    cell.n_units,
                    config.lookback,
                    cell.p_drop,
                    config.hyper.mask_handoff,
                    seed,
                )?
            };
            let cfg = TrainingConfig {
                max_epochs: config.train.max_epochs,
                batch_size: config.train.batch_size,
                patience: config.train.patience,
                lambda_l2: cell.lambda_l2,
                seed,
                ..TrainingConfig::default()
            };
            let log = train(&mut model, data.train(), data.validation(), &cfg)?;
            let val_loss = log.best_val_loss;
            Ok((val_loss, FittedModel::Seq2Seq(Box::new(model), log)))
        }
        "ar" => {
            let model = fit_ar(data.train(), cell.ar_order)?;
            let loglik = kalman_filter_loglik(&model, data.validation())?;
            let val_loss = -loglik / data.validation().len() as f64;
            Ok((val_loss, FittedModel::Ar(model)))
        }
        "gp-mc" | "gp-gmm" => {
            let (windows, targets) =
                gp_training_set(data.train(), config.lookback, config.hyper.gp_subset)?;
            let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
            let init = GpHyper::heuristic(&refs, &targets)?;
            let model = fit_gp(&refs, &targets, &init)?;

            let val = make_windows(data.validation(), config.lookback, 1)?;
            let keep = strided_subset(val.len(), config.hyper.gp_subset);
            let mut nll = 0.0;
            for &i in &keep {
                let (mean, var) = gp_predict(&model, val.inputs[i])?;
                nll -= Gaussian::new(mean, var)?.logpdf(val.targets[i]);
            }
            let val_loss = nll / keep.len() as f64;
            Ok((
                val_loss,
                FittedModel::Gp {
                    model,
                    windows,
                    targets,
                },
            ))
        }
        other => bail!("unknown model id {other:?}"),
    }
}

/// One-step-ahead windows over `series`, thinned to at most `cap` rows.
fn gp_training_set(
    series: &[f64],
    lookback: usize,
    cap: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let w = make_windows(series, lookback, 1)?;
    let keep = strided_subset(w.len(), cap);
    let windows: Vec<Vec<f64>> = keep.iter().map(|&i| w.inputs[i].to_vec()).collect();
    let targets: Vec<f64> = keep.iter().map(|&i| w.targets[i]).collect();
    Ok((windows, targets))
}

/// Serializes the winning model. Sequence models reuse their own checkpoint
/// layout with the experiment's model id appended; closed-form fits store
/// their defining quantities (coefficients and variances for the
/// autoregression, hyperparameters plus the training set for the process
/// regression) so loading rebuilds the exact fitted object.
fn winner_checkpoint(
    config: &ExperimentConfig,
    cell_index: usize,
    seed: u64,
    fitted: &FittedModel,
) -> Result<Checkpoint> {
    let mut c = match fitted {
        FittedModel::Seq2Seq(model, _) => model.to_checkpoint(),
        FittedModel::Ar(model) => {
            let mut c = Checkpoint::new();
            c.set("schema_version", "1");
            c.set("kind", "ar");
            c.set("order", model.coeffs.len().to_string());
            c.set_f64("innovation_var", model.innovation_var);
            c.set_f64("obs_noise_var", model.obs_noise_var);
            c.push_tensor(NamedTensor::new(
                "coeffs",
                1,
                model.coeffs.len(),
                model.coeffs.clone(),
            )?)?;
            c
        }
        FittedModel::Gp {
            model,
            windows,
            targets,
        } => {
            let p = model.input_dim();
            let n = windows.len();
            let mut c = Checkpoint::new();
            c.set("schema_version", "1");
            c.set("kind", "gp");
            c.set("lookback", p.to_string());
            c.set("k_max", config.hyper.k_max.to_string());
            c.set_f64("signal_var", model.hyper.signal_var);
            c.set_f64("noise_var", model.hyper.noise_var);
            c.push_tensor(NamedTensor::new(
                "lengthscales",
                1,
                p,
                model.hyper.lengthscales.clone(),
            )?)?;
            let mut flat = Vec::with_capacity(n * p);
            for w in windows {
                flat.extend_from_slice(w);
            }
            c.push_tensor(NamedTensor::new("windows", n, p, flat)?)?;
            c.push_tensor(NamedTensor::new("targets", 1, n, targets.clone())?)?;
            c
        }
    };
    c.set("cli_model", &config.model);
    c.set("cell_index", cell_index.to_string());
    c.set("cell_seed", seed.to_string());
    Ok(c)
}
