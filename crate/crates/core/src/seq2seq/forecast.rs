//! Open-loop forecasting and MC-dropout predictive distributions.
//!
//! A rollout encodes the last `lookback` observations, hands the summary to
//! the decoder, and unrolls `p_h` steps. In ordinal mode the decoder's first
//! input is the one-hot of the last observed sample and every later input is
//! the full probability vector it just emitted (not a sample, not an
//! argmax); in regression mode the scalar output is fed back. One mask set
//! stays fixed for the whole rollout, so uncertainty comes only from
//! averaging over mask sets.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use super::{OutputMode, Seq2SeqModel, GROUP_DEC, GROUP_ENC_BWD, GROUP_ENC_FWD, GROUP_HANDOFF, GROUP_OUT};
use crate::dist::{ForecastDensities, Gaussian};
use crate::error::{Error, Result};
use crate::nnet::{
    bidirectional_encode, dense_logits, dense_softmax_density, lstm_step, mul_rows,
    sample_dropout_masks, DropoutMasks, LstmState,
};
use crate::ordinal::CategoricalDensity;

/// Smallest variance reported by the regression ensemble; reached when all
/// rollouts coincide (e.g. dropout disabled).
pub const REGRESSION_VAR_FLOOR: f64 = 1e-8;

fn check_masks(model: &Seq2SeqModel, masks: &DropoutMasks) -> Result<()> {
    let expected = if model.mask_handoff() { 5 } else { 4 };
    if masks.groups.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{} mask groups supplied, model needs {expected}",
            masks.groups.len()
        )));
    }
    let spec = model.dropout_spec();
    for (g, (mask, size)) in masks.groups.iter().zip(&spec.group_sizes).enumerate() {
        if mask.len() != *size {
            return Err(Error::ShapeMismatch(format!(
                "mask group {g} has length {}, expected {size}",
                mask.len()
            )));
        }
    }
    Ok(())
}

fn check_rollout_args(model: &Seq2SeqModel, seed_window: &[f64], p_h: usize) -> Result<()> {
    if seed_window.len() != model.lookback() {
        return Err(Error::invalid(format!(
            "seed window has {} samples, model lookback is {}",
            seed_window.len(),
            model.lookback()
        )));
    }
    if p_h == 0 {
        return Err(Error::invalid("forecast horizon must be positive"));
    }
    Ok(())
}

/// Encoder pass shared by both modes: returns the decoder's initial state
/// with the optional handoff mask already applied.
fn encode_seed(
    model: &Seq2SeqModel,
    xs: &[Array2<f64>],
    masks: &DropoutMasks,
) -> Result<LstmState> {
    let mut state = bidirectional_encode(
        xs,
        &model.enc_fwd,
        &model.enc_bwd,
        &masks.groups[GROUP_ENC_FWD],
        &masks.groups[GROUP_ENC_BWD],
    )?;
    if model.mask_handoff() {
        mul_rows(&mut state.h, &masks.groups[GROUP_HANDOFF]);
    }
    Ok(state)
}

/// One open-loop rollout of the ordinal model under a fixed mask set.
///
/// Emits one categorical density per horizon step; step `k` depends only on
/// the seed window and the densities before it, so a longer rollout agrees
/// with a shorter one on their common prefix.
pub fn forecast_ordinal(
    model: &Seq2SeqModel,
    seed_window: &[f64],
    p_h: usize,
    masks: &DropoutMasks,
) -> Result<Vec<CategoricalDensity>> {
    if model.mode() != OutputMode::Ordinal {
        return Err(Error::invalid("forecast_ordinal needs an ordinal-mode model"));
    }
    check_rollout_args(model, seed_window, p_h)?;
    check_masks(model, masks)?;
    let partition = model
        .partition()
        .ok_or_else(|| Error::invalid("ordinal model without a partition"))?;
    let m = partition.bin_count();

    let mut indices = Vec::with_capacity(seed_window.len());
    for &v in seed_window {
        indices.push(partition.encode_one(v)?);
    }
    let xs: Vec<Array2<f64>> = indices
        .iter()
        .map(|&idx| {
            let mut x = Array2::zeros((1, m));
            x[[0, idx]] = 1.0;
            x
        })
        .collect();
    let mut state = encode_seed(model, &xs, masks)?;

    let mut input = xs.last().expect("lookback is positive").clone();
    let mut steps = Vec::with_capacity(p_h);
    for _ in 0..p_h {
        state = lstm_step(&input, &state, &model.dec, &masks.groups[GROUP_DEC])?;
        let density = dense_softmax_density(
            &state.h,
            &model.w_out,
            &model.b_out,
            &masks.groups[GROUP_OUT],
        )?;
        input = Array2::from_shape_vec((1, m), density.probs().to_vec())
            .expect("density length equals bin count");
        steps.push(density);
    }
    Ok(steps)
}

/// MC-dropout predictive distribution of the ordinal model.
///
/// Draws `n_s` mask sets from `rng`, runs one fixed-mask rollout per set,
/// and averages the categorical outputs elementwise per step. Mask sets are
/// drawn up front in rollout order and results are reduced in that same
/// order, so the output is byte-identical for a given seed regardless of
/// how the rollouts are scheduled across threads.
pub fn mc_dropout_forecast(
    model: &Seq2SeqModel,
    seed_window: &[f64],
    p_h: usize,
    n_s: usize,
    rng: &mut impl Rng,
) -> Result<ForecastDensities> {
    if model.mode() != OutputMode::Ordinal {
        return Err(Error::invalid(
            "mc_dropout_forecast needs an ordinal-mode model",
        ));
    }
    if n_s == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    check_rollout_args(model, seed_window, p_h)?;
    let partition = model
        .partition()
        .ok_or_else(|| Error::invalid("ordinal model without a partition"))?
        .clone();
    let spec = model.dropout_spec();
    let mask_sets: Vec<DropoutMasks> = (0..n_s)
        .map(|_| sample_dropout_masks(&spec, rng))
        .collect();

    let rollouts: Vec<Vec<CategoricalDensity>> = mask_sets
        .par_iter()
        .map(|masks| forecast_ordinal(model, seed_window, p_h, masks))
        .collect::<Result<_>>()?;

    let m = partition.bin_count();
    let mut steps = Vec::with_capacity(p_h);
    for k in 0..p_h {
        let mut mean = vec![0.0f64; m];
        for rollout in &rollouts {
            for (acc, &p) in mean.iter_mut().zip(rollout[k].probs()) {
                *acc += p;
            }
        }
        let inv = 1.0 / n_s as f64;
        for v in mean.iter_mut() {
            *v *= inv;
        }
        // A mean of simplex points is a simplex point; renormalize away the
        // accumulated last-ulp drift so construction cannot fail.
        let sum: f64 = mean.iter().sum();
        steps.push(CategoricalDensity::new(
            mean.into_iter().map(|p| p / sum).collect(),
        )?);
    }
    Ok(ForecastDensities::Categorical { partition, steps })
}

/// Raw MC-dropout rollouts of the regression model: `n_s` open-loop
/// trajectories of length `p_h`, each under one fixed mask set, feeding back
/// the scalar output. Exposed so trajectory consumers (event timing, CSV
/// artifacts) see exactly the ensemble the Gaussian summary was built from.
pub fn regression_rollouts(
    model: &Seq2SeqModel,
    seed_window: &[f64],
    p_h: usize,
    n_s: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    if model.mode() != OutputMode::Regression {
        return Err(Error::invalid(
            "regression rollouts need a regression-mode model",
        ));
    }
    if n_s == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    check_rollout_args(model, seed_window, p_h)?;
    if let Some(bad) = seed_window.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("seed window value {bad}")));
    }
    let spec = model.dropout_spec();
    let mask_sets: Vec<DropoutMasks> = (0..n_s)
        .map(|_| sample_dropout_masks(&spec, rng))
        .collect();

    mask_sets
        .par_iter()
        .map(|masks| {
            check_masks(model, masks)?;
            let xs: Vec<Array2<f64>> = seed_window
                .iter()
                .map(|&v| Array2::from_elem((1, 1), v))
                .collect();
            let mut state = encode_seed(model, &xs, masks)?;
            let mut input = xs.last().expect("lookback is positive").clone();
            let mut traj = Vec::with_capacity(p_h);
            for _ in 0..p_h {
                state = lstm_step(&input, &state, &model.dec, &masks.groups[GROUP_DEC])?;
                let out = dense_logits(
                    &state.h,
                    &model.w_out,
                    &model.b_out,
                    &masks.groups[GROUP_OUT],
                )?;
                let value = out[[0, 0]];
                if !value.is_finite() {
                    return Err(Error::NonFinite("regression rollout output".into()));
                }
                traj.push(value);
                input[[0, 0]] = value;
            }
            Ok(traj)
        })
        .collect()
}

/// Per-step ensemble moments: mean and population variance (`1/n` weighting)
/// across rollouts, with the variance floored at [`REGRESSION_VAR_FLOOR`].
/// Public so artifact writers can summarize a rollout ensemble they also
/// persist, without drawing a second ensemble.
pub fn rollout_moments(rollouts: &[Vec<f64>], p_h: usize) -> Vec<Gaussian> {
    let n = rollouts.len() as f64;
    (0..p_h)
        .map(|k| {
            let mean = rollouts.iter().map(|t| t[k]).sum::<f64>() / n;
            let var = rollouts
                .iter()
                .map(|t| {
                    let d = t[k] - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            Gaussian::new(mean, var.max(REGRESSION_VAR_FLOOR))
                .expect("finite moments with floored variance")
        })
        .collect()
}

/// MC-dropout forecast of the regression model: per-step Gaussian with the
/// ensemble mean and floored population variance across `n_s` rollouts.
pub fn forecast_regression(
    model: &Seq2SeqModel,
    seed_window: &[f64],
    p_h: usize,
    n_s: usize,
    rng: &mut impl Rng,
) -> Result<ForecastDensities> {
    let rollouts = regression_rollouts(model, seed_window, p_h, n_s, rng)?;
    Ok(ForecastDensities::Gaussian {
        steps: rollout_moments(&rollouts, p_h),
    })
}
