//! Teacher-forced training with early stopping.
//!
//! Training examples are consecutive-window triples taken at stride 1: the
//! encoder reads `x[i..i+P]`, the decoder reads the same window shifted by
//! one (`x[i+1..i+P+1]`), and each decoder step is scored against the next
//! value (`x[i+2..i+P+2]`). Every minibatch draws a fresh dropout mask set;
//! validation runs teacher-forced with identity masks. The loss is the mean
//! per decoder emission (cross-entropy in ordinal mode, squared error in
//! regression mode) plus an L2 penalty on weight matrices only.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{OutputMode, Seq2SeqModel, GROUP_DEC, GROUP_ENC_BWD, GROUP_ENC_FWD, GROUP_HANDOFF, GROUP_OUT};
use crate::error::{Error, Result};
use crate::nnet::{
    bidirectional_encode_cached, clip_global_norm, dense_backward, dense_logits, lstm_backward,
    lstm_scan_cached, mul_rows, sample_dropout_masks, softmax_xent_with_grad, DropoutMasks,
    LstmGrads, LstmParams, NadamHyper, NadamState,
};

/// Sliding one-step-ahead windows: `inputs[k]` is `series[k*stride ..
/// k*stride+lookback]` and `targets[k]` is the value immediately after it.
/// A series of length `lookback + k` yields exactly `k` windows at stride 1,
/// and consecutive windows overlap by `lookback - stride` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows<'a, T> {
    pub inputs: Vec<&'a [T]>,
    pub targets: Vec<T>,
}

impl<'a, T> Windows<'a, T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

pub fn make_windows<T: Copy>(series: &[T], lookback: usize, stride: usize) -> Result<Windows<'_, T>> {
    if lookback == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    if stride == 0 {
        return Err(Error::invalid("window stride must be positive"));
    }
    if series.len() <= lookback {
        return Err(Error::invalid(format!(
            "series of length {} is too short for windows of length {}",
            series.len(),
            lookback
        )));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut start = 0;
    while start + lookback < series.len() {
        inputs.push(&series[start..start + lookback]);
        targets.push(series[start + lookback]);
        start += stride;
    }
    Ok(Windows { inputs, targets })
}

#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Consecutive epochs without validation improvement before stopping.
    pub patience: usize,
    /// L2 penalty coefficient on weight matrices (biases are exempt).
    pub lambda_l2: f64,
    /// Global gradient-norm ceiling applied before each optimizer step.
    pub clip_norm: f64,
    pub optimizer: NadamHyper,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_epochs: 50,
            batch_size: 256,
            patience: 5,
            lambda_l2: 0.0,
            clip_norm: 5.0,
            optimizer: NadamHyper::default(),
            seed: 0,
            shuffle: true,
        }
    }
}

/// Per-epoch record of a training run. `train_loss` is the optimized
/// objective (data term plus L2 penalty); `val_loss` is the data term alone,
/// evaluated teacher-forced with identity masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Series encoded for the model's input convention.
enum Encoded {
    Ordinal(Vec<usize>),
    Real(Vec<f64>),
}

impl Encoded {
    fn len(&self) -> usize {
        match self {
            Encoded::Ordinal(v) => v.len(),
            Encoded::Real(v) => v.len(),
        }
    }
}

enum Targets {
    Classes(Vec<Vec<usize>>),
    Values(Vec<Array2<f64>>),
}

/// One minibatch of teacher-forcing triples, already in network layout.
struct Batch {
    enc: Vec<Array2<f64>>,
    dec: Vec<Array2<f64>>,
    tgt: Targets,
}

fn input_step(data: &Encoded, starts: &[usize], offset: usize, io_dim: usize) -> Array2<f64> {
    let mut arr = Array2::zeros((starts.len(), io_dim));
    match data {
        Encoded::Ordinal(idx) => {
            for (b, &s) in starts.iter().enumerate() {
                arr[[b, idx[s + offset]]] = 1.0;
            }
        }
        Encoded::Real(vals) => {
            for (b, &s) in starts.iter().enumerate() {
                arr[[b, 0]] = vals[s + offset];
            }
        }
    }
    arr
}

fn build_batch(data: &Encoded, starts: &[usize], lookback: usize, io_dim: usize) -> Batch {
    let enc = (0..lookback)
        .map(|t| input_step(data, starts, t, io_dim))
        .collect();
    let dec = (0..lookback)
        .map(|t| input_step(data, starts, t + 1, io_dim))
        .collect();
    let tgt = match data {
        Encoded::Ordinal(idx) => Targets::Classes(
            (0..lookback)
                .map(|t| starts.iter().map(|&s| idx[s + t + 2]).collect())
                .collect(),
        ),
        Encoded::Real(vals) => Targets::Values(
            (0..lookback)
                .map(|t| {
                    Array2::from_shape_fn((starts.len(), 1), |(b, _)| vals[starts[b] + t + 2])
                })
                .collect(),
        ),
    };
    Batch { enc, dec, tgt }
}

/// Gradients for every model tensor, in the same fixed order as
/// [`Seq2SeqModel::flat_views`].
pub(crate) struct GradSet {
    enc_fwd: LstmGrads,
    enc_bwd: LstmGrads,
    dec: LstmGrads,
    w_out: Array2<f64>,
    b_out: Array1<f64>,
}

impl GradSet {
    fn zeros(model: &Seq2SeqModel) -> Result<GradSet> {
        let n_u = model.n_units();
        let io = model.io_dim();
        Ok(GradSet {
            enc_fwd: LstmParams::zeros(n_u, io)?,
            enc_bwd: LstmParams::zeros(n_u, io)?,
            dec: LstmParams::zeros(n_u, io)?,
            w_out: Array2::zeros((io, n_u)),
            b_out: Array1::zeros(io),
        })
    }

    pub(crate) fn flat_views(&self) -> Vec<&[f64]> {
        let mut v = self.enc_fwd.flat_views();
        v.extend(self.enc_bwd.flat_views());
        v.extend(self.dec.flat_views());
        v.push(self.w_out.as_slice().unwrap());
        v.push(self.b_out.as_slice().unwrap());
        v
    }

    fn flat_views_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.enc_fwd.flat_views_mut();
        v.extend(self.enc_bwd.flat_views_mut());
        v.extend(self.dec.flat_views_mut());
        v.push(self.w_out.as_slice_mut().unwrap());
        v.push(self.b_out.as_slice_mut().unwrap());
        v
    }
}

/// Flat-order slots holding weight matrices (as opposed to bias vectors):
/// the four gate kernels of each LSTM and the output kernel.
fn is_weight_slot(idx: usize) -> bool {
    (idx < 24 && idx % 8 < 4) || idx == 24
}

/// Teacher-forced loss of one batch, optionally with gradients.
///
/// `lambda` adds `lambda * sum(W^2)` over weight matrices to the returned
/// loss (and `2*lambda*W` to the gradients). The data term is the mean over
/// batch rows and decoder steps.
fn batch_loss_and_grads(
    model: &Seq2SeqModel,
    batch: &Batch,
    masks: &DropoutMasks,
    lambda: f64,
    with_grads: bool,
) -> Result<(f64, Option<GradSet>)> {
    let expected_groups = if model.mask_handoff() { 5 } else { 4 };
    if masks.groups.len() != expected_groups {
        return Err(Error::ShapeMismatch(format!(
            "{} mask groups supplied, model needs {expected_groups}",
            masks.groups.len()
        )));
    }
    let t_len = batch.dec.len();
    let rows = batch.enc[0].nrows();
    let scale = 1.0 / (rows * t_len) as f64;

    let (summary, cache_f, cache_b) = bidirectional_encode_cached(
        &batch.enc,
        &model.enc_fwd,
        &model.enc_bwd,
        &masks.groups[GROUP_ENC_FWD],
        &masks.groups[GROUP_ENC_BWD],
    )?;
    let mut dec_init = summary;
    if model.mask_handoff() {
        mul_rows(&mut dec_init.h, &masks.groups[GROUP_HANDOFF]);
    }
    let (_, dec_cache) =
        lstm_scan_cached(&batch.dec, &dec_init, &model.dec, &masks.groups[GROUP_DEC])?;

    let mut loss = 0.0;
    let mut grads = GradSet::zeros(model)?;
    let mut d_h_steps: Vec<Array2<f64>> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let h_t = dec_cache.h_at(t);
        let logits = dense_logits(h_t, &model.w_out, &model.b_out, &masks.groups[GROUP_OUT])?;
        let d_logits = match &batch.tgt {
            Targets::Classes(classes) => {
                let (l, d_logits, _) = softmax_xent_with_grad(&logits, &classes[t], scale)?;
                loss += l;
                d_logits
            }
            Targets::Values(values) => {
                let resid = &logits - &values[t];
                loss += scale * resid.iter().map(|r| r * r).sum::<f64>();
                resid * (2.0 * scale)
            }
        };
        if with_grads {
            let (dw, db, dh) =
                dense_backward(&d_logits, h_t, &model.w_out, &masks.groups[GROUP_OUT]);
            grads.w_out += &dw;
            grads.b_out += &db;
            d_h_steps.push(dh);
        }
    }

    if lambda != 0.0 {
        for (idx, view) in model.flat_views().iter().enumerate() {
            if is_weight_slot(idx) {
                loss += lambda * view.iter().map(|w| w * w).sum::<f64>();
            }
        }
    }

    if !with_grads {
        return Ok((loss, None));
    }

    let (g_dec, _, d_init) = lstm_backward(
        &model.dec,
        &masks.groups[GROUP_DEC],
        &dec_cache,
        &d_h_steps,
        None,
    )?;
    grads.dec = g_dec;

    let mut d_h0 = d_init.h;
    if model.mask_handoff() {
        mul_rows(&mut d_h0, &masks.groups[GROUP_HANDOFF]);
    }
    // The summary is the elementwise mean of both encoders' final states, so
    // each encoder receives half of the incoming gradient.
    let dh_half = d_h0.mapv(|v| 0.5 * v);
    let dc_half = d_init.c.mapv(|v| 0.5 * v);
    let zero_steps = vec![Array2::zeros((rows, model.n_units())); batch.enc.len()];
    let (g_f, _, _) = lstm_backward(
        &model.enc_fwd,
        &masks.groups[GROUP_ENC_FWD],
        &cache_f,
        &zero_steps,
        Some((&dh_half, &dc_half)),
    )?;
    let (g_b, _, _) = lstm_backward(
        &model.enc_bwd,
        &masks.groups[GROUP_ENC_BWD],
        &cache_b,
        &zero_steps,
        Some((&dh_half, &dc_half)),
    )?;
    grads.enc_fwd = g_f;
    grads.enc_bwd = g_b;

    if lambda != 0.0 {
        let params = model.flat_views();
        let mut views = grads.flat_views_mut();
        for (idx, view) in views.iter_mut().enumerate() {
            if is_weight_slot(idx) {
                for (g, w) in view.iter_mut().zip(params[idx]) {
                    *g += 2.0 * lambda * w;
                }
            }
        }
    }

    Ok((loss, Some(grads)))
}

fn encode_series(model: &Seq2SeqModel, series: &[f64], split: &str) -> Result<Encoded> {
    let lookback = model.lookback();
    if series.len() < lookback + 2 {
        return Err(Error::invalid(format!(
            "{split} split of length {} cannot form teacher-forcing triples with lookback {lookback}",
            series.len()
        )));
    }
    match model.mode() {
        OutputMode::Ordinal => {
            let partition = model
                .partition()
                .ok_or_else(|| Error::invalid("ordinal model without a partition"))?;
            let mut idx = Vec::with_capacity(series.len());
            for &v in series {
                idx.push(partition.encode_one(v)?);
            }
            Ok(Encoded::Ordinal(idx))
        }
        OutputMode::Regression => {
            if let Some(bad) = series.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "{split} split contains non-finite value {bad}"
                )));
            }
            Ok(Encoded::Real(series.to_vec()))
        }
    }
}

fn mean_loss_over(
    model: &Seq2SeqModel,
    data: &Encoded,
    starts: &[usize],
    batch_size: usize,
    masks: &DropoutMasks,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut count = 0usize;
    for chunk in starts.chunks(batch_size) {
        let batch = build_batch(data, chunk, model.lookback(), model.io_dim());
        let (loss, _) = batch_loss_and_grads(model, &batch, masks, 0.0, false)?;
        acc += loss * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(acc / count as f64)
}

/// Teacher-forced loss over all of `series` and its gradient with respect
/// to every parameter, flattened in [`Seq2SeqModel::flat_views`] order.
/// This is the verification surface: finite-difference audits perturb the
/// model through `flat_views_mut` and compare against these gradients.
pub fn loss_and_gradient(
    model: &Seq2SeqModel,
    series: &[f64],
    masks: &DropoutMasks,
    lambda: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let data = encode_series(model, series, "gradient audit")?;
    let lookback = model.lookback();
    let starts: Vec<usize> = (0..data.len() - lookback - 1).collect();
    let batch = build_batch(&data, &starts, lookback, model.io_dim());
    let (loss, grads) = batch_loss_and_grads(model, &batch, masks, lambda, true)?;
    let grads = grads.expect("gradients requested");
    Ok((
        loss,
        grads.flat_views().iter().map(|s| s.to_vec()).collect(),
    ))
}

/// Teacher-forced data-term loss over a held-out series with identity
/// masks: the same quantity `TrainingLog::val_loss` records, so a reloaded
/// checkpoint can be checked against its logged validation loss.
pub fn validation_loss(model: &Seq2SeqModel, series: &[f64], batch_size: usize) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let data = encode_series(model, series, "validation")?;
    let starts: Vec<usize> = (0..data.len() - model.lookback() - 1).collect();
    mean_loss_over(model, &data, &starts, batch_size, &model.eval_masks())
}

/// Trains `model` in place and returns the per-epoch log.
///
/// Minimizes teacher-forced cross-entropy (ordinal) or MSE (regression) with
/// the documented Nadam rule; draws fresh dropout masks per minibatch;
/// evaluates the validation split after every epoch; stops once validation
/// loss has failed to improve for `patience` consecutive epochs or at
/// `max_epochs`; finally restores the best-validation parameters. A
/// non-finite loss aborts with [`Error::Diverged`].
pub fn train(
    model: &mut Seq2SeqModel,
    train_series: &[f64],
    val_series: &[f64],
    cfg: &TrainingConfig,
) -> Result<TrainingLog> {
    if cfg.max_epochs == 0 || cfg.batch_size == 0 || cfg.patience == 0 {
        return Err(Error::invalid(
            "max_epochs, batch_size and patience must be positive",
        ));
    }
    if !cfg.lambda_l2.is_finite() || cfg.lambda_l2 < 0.0 {
        return Err(Error::invalid("lambda_l2 must be finite and nonnegative"));
    }
    if !(cfg.clip_norm > 0.0) {
        return Err(Error::invalid("clip_norm must be positive"));
    }
    let train_data = encode_series(model, train_series, "train")?;
    let val_data = encode_series(model, val_series, "validation")?;

    let lookback = model.lookback();
    // A triple spans lookback + 2 consecutive samples.
    let mut train_starts: Vec<usize> = (0..train_data.len() - lookback - 1).collect();
    let val_starts: Vec<usize> = (0..val_data.len() - lookback - 1).collect();

    let spec = model.dropout_spec();
    let identity = model.eval_masks();
    let mut rng_shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_shuffle.set_stream(1);
    let mut rng_masks = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_masks.set_stream(2);

    let mut nadam = NadamState::new(cfg.optimizer, &model.tensor_sizes());
    let mut log = TrainingLog {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut best_params: Vec<Vec<f64>> = model.flat_views().iter().map(|s| s.to_vec()).collect();
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        if cfg.shuffle {
            train_starts.shuffle(&mut rng_shuffle);
        }
        let mut acc = 0.0;
        let mut seen = 0usize;
        for chunk in train_starts.chunks(cfg.batch_size) {
            let batch = build_batch(&train_data, chunk, lookback, model.io_dim());
            let masks = sample_dropout_masks(&spec, &mut rng_masks);
            let (loss, grads) =
                batch_loss_and_grads(model, &batch, &masks, cfg.lambda_l2, true)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            let mut grads = grads.expect("gradients requested");
            {
                let mut views = grads.flat_views_mut();
                clip_global_norm(&mut views, cfg.clip_norm);
            }
            nadam.step(model.flat_views_mut(), &grads.flat_views())?;
            acc += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = acc / seen as f64;
        let val_loss = mean_loss_over(model, &val_data, &val_starts, cfg.batch_size, &identity)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        log.train_loss.push(train_loss);
        log.val_loss.push(val_loss);

        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            for (buf, view) in best_params.iter_mut().zip(model.flat_views()) {
                buf.copy_from_slice(view);
            }
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }

    for (view, buf) in model.flat_views_mut().iter_mut().zip(&best_params) {
        view.copy_from_slice(buf);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{finite_difference_gradient, relative_error};
    use crate::ordinal::BinPartition;

    fn flat_params(model: &Seq2SeqModel) -> Vec<f64> {
        model
            .flat_views()
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect()
    }

    fn set_flat_params(model: &mut Seq2SeqModel, theta: &[f64]) {
        let mut off = 0;
        for view in model.flat_views_mut() {
            view.copy_from_slice(&theta[off..off + view.len()]);
            off += view.len();
        }
    }

    #[test]
    fn make_windows_matches_the_counting_rules() {
        let series: Vec<f64> = (0..9).map(f64::from).collect();
        // N = P + 1 gives exactly one window.
        let w = make_windows(&series[..5], 4, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.inputs[0], &series[0..4]);
        assert_eq!(w.targets[0], 4.0);
        // N = P + k gives k windows.
        let w = make_windows(&series, 4, 1).unwrap();
        assert_eq!(w.len(), 5);
        // Stride-s neighbors share lookback - s samples.
        let w = make_windows(&series, 4, 2).unwrap();
        assert_eq!(w.inputs[0][2..], w.inputs[1][..2]);
        assert!(make_windows(&series[..4], 4, 1).is_err());
    }

    #[test]
    fn full_graph_gradient_matches_finite_differences_ordinal() {
        use rand::SeedableRng;
        let partition = BinPartition::new(0.0, 1.0, 3).unwrap();
        let model = Seq2SeqModel::new_ordinal(partition, 3, 4, 0.3, true, 77).unwrap();
        let series = vec![0.05, 0.4, 0.9, 0.2, 0.7, 0.55, 0.1, 0.85, 0.35, 0.6];
        let data = encode_series(&model, &series, "train").unwrap();
        let batch = build_batch(&data, &[0, 3], 4, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let masks = sample_dropout_masks(&model.dropout_spec(), &mut rng);
        let lambda = 0.01;

        let (_, grads) = batch_loss_and_grads(&model, &batch, &masks, lambda, true).unwrap();
        let analytic: Vec<f64> = grads
            .unwrap()
            .flat_views()
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect();

        let theta = flat_params(&model);
        let mut probe = model.clone();
        let mut f = |t: &[f64]| {
            set_flat_params(&mut probe, t);
            batch_loss_and_grads(&probe, &batch, &masks, lambda, false)
                .unwrap()
                .0
        };
        let numeric = finite_difference_gradient(&mut f, &theta, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(
                relative_error(*a, *n) < 1e-6,
                "analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn full_graph_gradient_matches_finite_differences_regression() {
        use rand::SeedableRng;
        let model = Seq2SeqModel::new_regression(3, 4, 0.2, false, 13).unwrap();
        let series = vec![0.1, -0.4, 0.9, -0.2, 0.7, 0.0, -0.8, 0.5, 0.3, -0.6];
        let data = encode_series(&model, &series, "train").unwrap();
        let batch = build_batch(&data, &[1, 4], 4, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let masks = sample_dropout_masks(&model.dropout_spec(), &mut rng);

        let (_, grads) = batch_loss_and_grads(&model, &batch, &masks, 0.001, true).unwrap();
        let analytic: Vec<f64> = grads
            .unwrap()
            .flat_views()
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect();

        let theta = flat_params(&model);
        let mut probe = model.clone();
        let mut f = |t: &[f64]| {
            set_flat_params(&mut probe, t);
            batch_loss_and_grads(&probe, &batch, &masks, 0.001, false)
                .unwrap()
                .0
        };
        let numeric = finite_difference_gradient(&mut f, &theta, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(
                relative_error(*a, *n) < 1e-6,
                "analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn batch_loss_is_invariant_to_sample_order() {
        let partition = BinPartition::new(0.0, 1.0, 4).unwrap();
        let model = Seq2SeqModel::new_ordinal(partition, 4, 3, 0.0, false, 3).unwrap();
        let series: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).fract()).collect();
        let data = encode_series(&model, &series, "train").unwrap();
        let masks = model.eval_masks();
        let a = batch_loss_and_grads(
            &model,
            &build_batch(&data, &[0, 4, 8, 12], 3, 4),
            &masks,
            0.0,
            false,
        )
        .unwrap()
        .0;
        let b = batch_loss_and_grads(
            &model,
            &build_batch(&data, &[8, 0, 12, 4], 3, 4),
            &masks,
            0.0,
            false,
        )
        .unwrap()
        .0;
        assert!(relative_error(a, b) < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn constant_series_saturates_its_bin() {
        let series = vec![0.7; 400];
        let partition = BinPartition::fit(&series, 8, 0.05).unwrap();
        let bin = partition.encode_one(0.7).unwrap();
        let mut model = Seq2SeqModel::new_ordinal(partition, 16, 8, 0.0, false, 42).unwrap();
        let cfg = TrainingConfig {
            batch_size: 64,
            lambda_l2: 1e-7,
            seed: 42,
            ..TrainingConfig::default()
        };
        let log = train(&mut model, &series, &series[..30], &cfg).unwrap();
        assert_eq!(log.train_loss.len(), log.val_loss.len());
        let min = log.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(log.val_loss[log.best_epoch], min);
        assert_eq!(log.best_val_loss, min);
        // Restored parameters reproduce the logged best validation loss.
        let data = encode_series(&model, &series[..30], "validation").unwrap();
        let starts: Vec<usize> = (0..data.len() - 8 - 1).collect();
        let replay =
            mean_loss_over(&model, &data, &starts, cfg.batch_size, &model.eval_masks()).unwrap();
        assert!(
            (replay - log.best_val_loss).abs() < 1e-12,
            "replay {replay} vs logged {}",
            log.best_val_loss
        );
        let forecast =
            crate::seq2seq::forecast_ordinal(&model, &series[..8], 5, &model.eval_masks()).unwrap();
        for density in &forecast {
            assert!(
                density.probs()[bin] >= 0.99,
                "constant bin probability {}",
                density.probs()[bin]
            );
        }
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let series: Vec<f64> = (0..60).map(|i| ((i as f64) * 0.4).sin()).collect();
        let partition = BinPartition::fit(&series, 6, 0.05).unwrap();
        let cfg = TrainingConfig {
            max_epochs: 3,
            seed: 11,
            ..TrainingConfig::default()
        };
        let run = |seed_model: u64| {
            let mut model =
                Seq2SeqModel::new_ordinal(partition.clone(), 8, 6, 0.25, false, seed_model)
                    .unwrap();
            train(&mut model, &series[..45], &series[45..], &cfg).unwrap()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        let mut model = Seq2SeqModel::new_regression(4, 4, 0.0, false, 1).unwrap();
        for view in model.flat_views_mut() {
            for v in view.iter_mut() {
                *v = 1e200;
            }
        }
        let series: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).cos()).collect();
        let cfg = TrainingConfig::default();
        let err = train(&mut model, &series[..20], &series[20..], &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged(_)), "got {err:?}");
    }
}
