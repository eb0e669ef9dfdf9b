//! LSTM cell, sequence scan, bidirectional encoder, and exact
//! backpropagation through time.
//!
//! Gate equations, with `x'` the concatenation of the step input and the
//! previous hidden state (masked once per pass by the dropout group):
//!
//! ```text
//! i = sigmoid(W_i x' + b_i)      o = sigmoid(W_o x' + b_o)
//! f = sigmoid(W_f x' + b_f)      s = tanh(W_s x' + b_s)
//! C_t = i * s + f * C_{t-1}      h_t = o * tanh(C_t)
//! ```
//!
//! Each `W_*` has shape `(n_units, input_dim + n_units)`. The backward pass
//! consumes the per-step cache recorded by [`lstm_scan_cached`] and returns
//! gradients that are exact for the masked network (validated against
//! central finite differences in the acceptance suite).

use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::{add_bias, mul_rows, sigmoid};
use crate::error::{Error, Result};

/// Gate weights and biases of one LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_f: Array2<f64>,
    pub w_s: Array2<f64>,
    pub b_i: Array1<f64>,
    pub b_o: Array1<f64>,
    pub b_f: Array1<f64>,
    pub b_s: Array1<f64>,
}

/// Gradient container with the same shape as the parameters.
pub type LstmGrads = LstmParams;

impl LstmParams {
    pub fn zeros(n_units: usize, input_dim: usize) -> Result<Self> {
        if n_units == 0 || input_dim == 0 {
            return Err(Error::invalid("LSTM dimensions must be positive"));
        }
        let d = input_dim + n_units;
        Ok(LstmParams {
            w_i: Array2::zeros((n_units, d)),
            w_o: Array2::zeros((n_units, d)),
            w_f: Array2::zeros((n_units, d)),
            w_s: Array2::zeros((n_units, d)),
            b_i: Array1::zeros(n_units),
            b_o: Array1::zeros(n_units),
            b_f: Array1::zeros(n_units),
            b_s: Array1::zeros(n_units),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(n_units: usize, input_dim: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        let d = input_dim + n_units;
        Ok(LstmParams {
            w_i: super::glorot_uniform_init(n_units, d, rng)?,
            w_o: super::glorot_uniform_init(n_units, d, rng)?,
            w_f: super::glorot_uniform_init(n_units, d, rng)?,
            w_s: super::glorot_uniform_init(n_units, d, rng)?,
            b_i: Array1::zeros(n_units),
            b_o: Array1::zeros(n_units),
            b_f: Array1::zeros(n_units),
            b_s: Array1::zeros(n_units),
        })
    }

    pub fn n_units(&self) -> usize {
        self.w_i.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.ncols() - self.w_i.nrows()
    }

    /// Weight matrices only (L2 regularization applies to these, not biases).
    pub fn weight_matrices(&self) -> [&Array2<f64>; 4] {
        [&self.w_i, &self.w_o, &self.w_f, &self.w_s]
    }

    /// Flat views over all eight tensors, gate weights first.
    pub fn flat_views(&self) -> Vec<&[f64]> {
        vec![
            self.w_i.as_slice().unwrap(),
            self.w_o.as_slice().unwrap(),
            self.w_f.as_slice().unwrap(),
            self.w_s.as_slice().unwrap(),
            self.b_i.as_slice().unwrap(),
            self.b_o.as_slice().unwrap(),
            self.b_f.as_slice().unwrap(),
            self.b_s.as_slice().unwrap(),
        ]
    }

    pub fn flat_views_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_i.as_slice_mut().unwrap(),
            self.w_o.as_slice_mut().unwrap(),
            self.w_f.as_slice_mut().unwrap(),
            self.w_s.as_slice_mut().unwrap(),
            self.b_i.as_slice_mut().unwrap(),
            self.b_o.as_slice_mut().unwrap(),
            self.b_f.as_slice_mut().unwrap(),
            self.b_s.as_slice_mut().unwrap(),
        ]
    }
}

/// Hidden and cell state, one row per batch element.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl LstmState {
    pub fn zeros(batch: usize, n_units: usize) -> Self {
        LstmState {
            h: Array2::zeros((batch, n_units)),
            c: Array2::zeros((batch, n_units)),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.nrows()
    }
}

/// Per-step activations recorded for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    /// Masked concatenated input `x' = concat(x, h_prev) * mask`.
    xm: Array2<f64>,
    i: Array2<f64>,
    o: Array2<f64>,
    f: Array2<f64>,
    s: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

/// Forward cache of a full scan.
#[derive(Debug, Clone)]
pub struct LstmCache {
    init_c: Array2<f64>,
    steps: Vec<StepCache>,
}

impl LstmCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Hidden state emitted at step `t`.
    pub fn h_at(&self, t: usize) -> &Array2<f64> {
        &self.steps[t].h
    }
}

fn check_step_shapes(
    x: &Array2<f64>,
    prev: &LstmState,
    params: &LstmParams,
    mask: &Array1<f64>,
) -> Result<()> {
    let n_u = params.n_units();
    let n_in = params.input_dim();
    if x.ncols() != n_in {
        return Err(Error::ShapeMismatch(format!(
            "LSTM input has {} features, parameters expect {n_in}",
            x.ncols()
        )));
    }
    if prev.h.nrows() != x.nrows() || prev.h.ncols() != n_u || prev.c.dim() != prev.h.dim() {
        return Err(Error::ShapeMismatch(format!(
            "LSTM state {:?}/{:?} incompatible with batch {} and {n_u} units",
            prev.h.dim(),
            prev.c.dim(),
            x.nrows()
        )));
    }
    if mask.len() != n_in + n_u {
        return Err(Error::ShapeMismatch(format!(
            "dropout mask has {} entries, expected input_dim + n_units = {}",
            mask.len(),
            n_in + n_u
        )));
    }
    Ok(())
}

fn step_inner(
    x: &Array2<f64>,
    prev: &LstmState,
    params: &LstmParams,
    mask: &Array1<f64>,
) -> (StepCache, LstmState) {
    let mut xm = concatenate(Axis(1), &[x.view(), prev.h.view()]).expect("shapes checked");
    mul_rows(&mut xm, mask);

    let mut a_i = xm.dot(&params.w_i.t());
    add_bias(&mut a_i, &params.b_i);
    let mut a_o = xm.dot(&params.w_o.t());
    add_bias(&mut a_o, &params.b_o);
    let mut a_f = xm.dot(&params.w_f.t());
    add_bias(&mut a_f, &params.b_f);
    let mut a_s = xm.dot(&params.w_s.t());
    add_bias(&mut a_s, &params.b_s);

    let i = a_i.mapv(sigmoid);
    let o = a_o.mapv(sigmoid);
    let f = a_f.mapv(sigmoid);
    let s = a_s.mapv(f64::tanh);
    let c = &i * &s + &f * &prev.c;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;

    let state = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    (
        StepCache {
            xm,
            i,
            o,
            f,
            s,
            c,
            tanh_c,
            h,
        },
        state,
    )
}

/// One LSTM step. `mask` multiplies the concatenated input `(x, h_prev)` and
/// must be all ones when dropout is off.
pub fn lstm_step(
    x: &Array2<f64>,
    prev: &LstmState,
    params: &LstmParams,
    mask: &Array1<f64>,
) -> Result<LstmState> {
    check_step_shapes(x, prev, params, mask)?;
    let (_, state) = step_inner(x, prev, params, mask);
    Ok(state)
}

/// Scans a sequence, returning the state after every step.
pub fn lstm_scan(
    xs: &[Array2<f64>],
    init: &LstmState,
    params: &LstmParams,
    mask: &Array1<f64>,
) -> Result<Vec<LstmState>> {
    let mut states = Vec::with_capacity(xs.len());
    let mut prev = init.clone();
    for x in xs {
        check_step_shapes(x, &prev, params, mask)?;
        let (_, state) = step_inner(x, &prev, params, mask);
        states.push(state.clone());
        prev = state;
    }
    Ok(states)
}

/// Scans a sequence while recording the cache needed by [`lstm_backward`].
/// Returns the final state (equal to `init` for an empty sequence).
pub fn lstm_scan_cached(
    xs: &[Array2<f64>],
    init: &LstmState,
    params: &LstmParams,
    mask: &Array1<f64>,
) -> Result<(LstmState, LstmCache)> {
    let mut steps = Vec::with_capacity(xs.len());
    let mut prev = init.clone();
    for x in xs {
        check_step_shapes(x, &prev, params, mask)?;
        let (cache, state) = step_inner(x, &prev, params, mask);
        steps.push(cache);
        prev = state;
    }
    Ok((
        prev,
        LstmCache {
            init_c: init.c.clone(),
            steps,
        },
    ))
}

/// Backpropagation through time over a cached scan.
///
/// `d_h_steps[t]` is the loss gradient flowing into the hidden state emitted
/// at step `t` from outside the chain (e.g. an output layer); pass zero
/// arrays where a step has no direct consumer. `d_final` adds an extra
/// `(d_h, d_c)` into the final state, used when the final state seeds
/// another network. Returns the parameter gradients, the gradient w.r.t.
/// each step input, and the gradient w.r.t. the initial state.
pub fn lstm_backward(
    params: &LstmParams,
    mask: &Array1<f64>,
    cache: &LstmCache,
    d_h_steps: &[Array2<f64>],
    d_final: Option<(&Array2<f64>, &Array2<f64>)>,
) -> Result<(LstmGrads, Vec<Array2<f64>>, LstmState)> {
    let t_len = cache.steps.len();
    if d_h_steps.len() != t_len {
        return Err(Error::ShapeMismatch(format!(
            "{} step gradients supplied for {} cached steps",
            d_h_steps.len(),
            t_len
        )));
    }
    if t_len == 0 {
        return Err(Error::invalid("cannot backpropagate an empty scan"));
    }
    let n_u = params.n_units();
    let n_in = params.input_dim();
    let batch = cache.steps[0].h.nrows();

    let mut grads = LstmParams::zeros(n_u, n_in)?;
    let mut d_xs = vec![Array2::zeros((batch, n_in)); t_len];
    let mut dh_next: Array2<f64> = Array2::zeros((batch, n_u));
    let mut dc_next: Array2<f64> = Array2::zeros((batch, n_u));

    for t in (0..t_len).rev() {
        let st = &cache.steps[t];
        let mut dh = &d_h_steps[t] + &dh_next;
        let mut dc_in = dc_next.clone();
        if t == t_len - 1 {
            if let Some((dh_f, dc_f)) = d_final {
                dh += dh_f;
                dc_in += dc_f;
            }
        }
        // dC_t = dC_in + dh * o * (1 - tanh(C)^2)
        let dtanh = st.tanh_c.mapv(|v| 1.0 - v * v);
        let dc = dc_in + &dh * &st.o * &dtanh;

        // Pre-activation gate gradients.
        let da_o = &dh * &st.tanh_c * &st.o * &st.o.mapv(|v| 1.0 - v);
        let da_i = &dc * &st.s * &st.i * &st.i.mapv(|v| 1.0 - v);
        let da_s = &dc * &st.i * &st.s.mapv(|v| 1.0 - v * v);
        let c_prev = if t > 0 {
            &cache.steps[t - 1].c
        } else {
            &cache.init_c
        };
        let da_f = &dc * c_prev * &st.f * &st.f.mapv(|v| 1.0 - v);

        grads.w_i += &da_i.t().dot(&st.xm);
        grads.w_o += &da_o.t().dot(&st.xm);
        grads.w_f += &da_f.t().dot(&st.xm);
        grads.w_s += &da_s.t().dot(&st.xm);
        grads.b_i += &da_i.sum_axis(Axis(0));
        grads.b_o += &da_o.sum_axis(Axis(0));
        grads.b_f += &da_f.sum_axis(Axis(0));
        grads.b_s += &da_s.sum_axis(Axis(0));

        let mut dxp = da_i.dot(&params.w_i);
        dxp += &da_o.dot(&params.w_o);
        dxp += &da_f.dot(&params.w_f);
        dxp += &da_s.dot(&params.w_s);
        mul_rows(&mut dxp, mask);

        d_xs[t].assign(&dxp.slice(s![.., ..n_in]));
        dh_next = dxp.slice(s![.., n_in..]).to_owned();
        dc_next = &dc * &st.f;
    }

    Ok((
        grads,
        d_xs,
        LstmState {
            h: dh_next,
            c: dc_next,
        },
    ))
}

/// Bidirectional encoder: one LSTM scans the sequence forward, a second
/// scans it reversed, and the two final states are averaged elementwise to
/// form the summary handed to a decoder. Initial states are zero.
pub fn bidirectional_encode(
    xs: &[Array2<f64>],
    fwd: &LstmParams,
    bwd: &LstmParams,
    mask_fwd: &Array1<f64>,
    mask_bwd: &Array1<f64>,
) -> Result<LstmState> {
    let (summary, _, _) = bidirectional_encode_cached(xs, fwd, bwd, mask_fwd, mask_bwd)?;
    Ok(summary)
}

/// Cached variant of [`bidirectional_encode`] for training.
pub fn bidirectional_encode_cached(
    xs: &[Array2<f64>],
    fwd: &LstmParams,
    bwd: &LstmParams,
    mask_fwd: &Array1<f64>,
    mask_bwd: &Array1<f64>,
) -> Result<(LstmState, LstmCache, LstmCache)> {
    if xs.is_empty() {
        return Err(Error::invalid("encoder needs a nonempty input sequence"));
    }
    if fwd.n_units() != bwd.n_units() || fwd.input_dim() != bwd.input_dim() {
        return Err(Error::ShapeMismatch(
            "forward/backward encoder parameter shapes differ".into(),
        ));
    }
    let batch = xs[0].nrows();
    let init = LstmState::zeros(batch, fwd.n_units());
    let (final_f, cache_f) = lstm_scan_cached(xs, &init, fwd, mask_fwd)?;
    let reversed: Vec<Array2<f64>> = xs.iter().rev().cloned().collect();
    let (final_b, cache_b) = lstm_scan_cached(&reversed, &init, bwd, mask_bwd)?;
    let summary = LstmState {
        h: 0.5 * (&final_f.h + &final_b.h),
        c: 0.5 * (&final_f.c + &final_b.c),
    };
    Ok((summary, cache_f, cache_b))
}
