//! Batched LSTM building blocks with exact reverse-mode gradients.
//!
//! Everything operates on `f64` with a leading batch dimension: activations
//! are `(batch, features)` row-major arrays. Dropout follows the inverted
//! convention (surviving units scaled by `1/(1-p)`), with one mask per weight
//! group per forward pass, reused at every time step of that pass.

mod dense;
mod lstm;
mod optim;

pub use dense::{
    cross_entropy, dense_backward, dense_logits, dense_softmax, dense_softmax_density, mse,
    softmax_rows, softmax_xent_with_grad,
};
pub use lstm::{
    bidirectional_encode, bidirectional_encode_cached, lstm_backward, lstm_scan,
    lstm_scan_cached, lstm_step, LstmCache, LstmGrads, LstmParams, LstmState,
};
pub use optim::{clip_global_norm, NadamHyper, NadamState};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Adds a bias row-vector to every row of `a`.
pub(crate) fn add_bias(a: &mut Array2<f64>, b: &Array1<f64>) {
    debug_assert_eq!(a.ncols(), b.len());
    let bb = b.broadcast(a.raw_dim()).unwrap();
    a.zip_mut_with(&bb, |x, &y| *x += y);
}

/// Multiplies every row of `a` elementwise by `m`.
pub(crate) fn mul_rows(a: &mut Array2<f64>, m: &Array1<f64>) {
    debug_assert_eq!(a.ncols(), m.len());
    let mb = m.broadcast(a.raw_dim()).unwrap();
    a.zip_mut_with(&mb, |x, &y| *x *= y);
}

/// Glorot-uniform initialization: entries i.i.d. uniform on `[-L, L]` with
/// `L = sqrt(6 / (fan_in + fan_out))`; for a `(rows, cols)` weight acting as
/// `x . W^T`, `fan_in = cols` and `fan_out = rows`, so `L` depends only on
/// the dimension sum. Entries are drawn in row-major order, so the result is
/// reproducible for a fixed RNG state.
pub fn glorot_uniform_init(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Array2<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("glorot init needs positive dimensions"));
    }
    let l = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-l..=l)).collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape matches data length"))
}

/// Dropout configuration: drop probability plus the length of each mask
/// group. A group is one site where a mask multiplies activations (e.g. the
/// concatenated input of one LSTM), reused across all time steps of a pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutSpec {
    pub p_drop: f64,
    pub group_sizes: Vec<usize>,
}

impl DropoutSpec {
    pub fn new(p_drop: f64, group_sizes: Vec<usize>) -> Result<Self> {
        if !(0.0..1.0).contains(&p_drop) {
            return Err(Error::invalid(format!(
                "p_drop must lie in [0, 1), got {p_drop}"
            )));
        }
        if group_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("dropout group sizes must be positive"));
        }
        Ok(DropoutSpec {
            p_drop,
            group_sizes,
        })
    }
}

/// Concrete masks for one forward pass. Entries are `0` (dropped) or
/// `1/(1-p)` (kept, inverted-dropout scaling), so masked activations are
/// unbiased in expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub groups: Vec<Array1<f64>>,
}

impl DropoutMasks {
    /// All-ones masks (dropout disabled / evaluation mode).
    pub fn identity(spec: &DropoutSpec) -> DropoutMasks {
        DropoutMasks {
            groups: spec
                .group_sizes
                .iter()
                .map(|&s| Array1::ones(s))
                .collect(),
        }
    }
}

/// Draws one set of masks. With `p_drop == 0` every entry is exactly 1.
pub fn sample_dropout_masks(spec: &DropoutSpec, rng: &mut impl Rng) -> DropoutMasks {
    if spec.p_drop == 0.0 {
        return DropoutMasks::identity(spec);
    }
    let scale = 1.0 / (1.0 - spec.p_drop);
    DropoutMasks {
        groups: spec
            .group_sizes
            .iter()
            .map(|&s| {
                Array1::from_iter((0..s).map(|_| {
                    if rng.gen::<f64>() < spec.p_drop {
                        0.0
                    } else {
                        scale
                    }
                }))
            })
            .collect(),
    }
}

/// Central finite-difference gradient of a scalar function, used to validate
/// analytic gradients: `(f(x+h) - f(x-h)) / 2h` per coordinate.
pub fn finite_difference_gradient(
    f: &mut dyn FnMut(&[f64]) -> f64,
    theta: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut work = theta.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for j in 0..theta.len() {
        let orig = work[j];
        work[j] = orig + h;
        let fp = f(&work);
        work[j] = orig - h;
        let fm = f(&work);
        work[j] = orig;
        grad[j] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error used by the gradient checks: `|a - b| / max(1, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = glorot_uniform_init(16, 48, &mut rng).unwrap();
        let l = (6.0 / 64.0f64).sqrt();
        assert!(w.iter().all(|&x| x.abs() <= l));
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let w2 = glorot_uniform_init(16, 48, &mut rng2).unwrap();
        assert_eq!(w, w2);
        // Not degenerate: values spread over the interval.
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < l / 4.0);
    }

    #[test]
    fn dropout_zero_probability_is_identity() {
        let spec = DropoutSpec::new(0.0, vec![8, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let masks = sample_dropout_masks(&spec, &mut rng);
        for g in &masks.groups {
            assert!(g.iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn dropout_rejects_p_one() {
        assert!(DropoutSpec::new(1.0, vec![4]).is_err());
        assert!(DropoutSpec::new(-0.1, vec![4]).is_err());
    }

    #[test]
    fn inverted_dropout_is_unbiased() {
        // E[masked activation] == activation within 2% over >= 1e4 masks.
        let spec = DropoutSpec::new(0.35, vec![4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let activation = [1.0, -2.0, 0.5, 3.0];
        let mut acc = [0.0; 4];
        let n = 20_000;
        for _ in 0..n {
            let m = sample_dropout_masks(&spec, &mut rng);
            for (a, (&act, &mask)) in acc
                .iter_mut()
                .zip(activation.iter().zip(m.groups[0].iter()))
            {
                *a += act * mask;
            }
        }
        for (a, &act) in acc.iter().zip(&activation) {
            let mean = a / n as f64;
            assert!(
                (mean - act).abs() <= 0.02 * act.abs(),
                "mean {mean} vs activation {act}"
            );
        }
    }

    #[test]
    fn finite_difference_on_quadratic() {
        let mut f = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let g = finite_difference_gradient(&mut f, &[1.0, -2.0, 3.0], 1e-5);
        for (gi, xi) in g.iter().zip(&[1.0, -2.0, 3.0]) {
            assert!(relative_error(*gi, *xi) < 1e-9);
        }
    }
}
