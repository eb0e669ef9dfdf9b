//! Output layer and losses: masked dense layer, row softmax, cross-entropy,
//! mean squared error.

use ndarray::{Array1, Array2, Axis};

use super::{add_bias, mul_rows};
use crate::error::{Error, Result};
use crate::ordinal::CategoricalDensity;

/// Logits of a dense layer applied to dropout-masked features:
/// `(h * mask) . W^T + b` with `W` of shape `(out_dim, n_units)`.
pub fn dense_logits(
    h: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    mask: &Array1<f64>,
) -> Result<Array2<f64>> {
    if h.ncols() != w.ncols() || b.len() != w.nrows() || mask.len() != h.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "dense layer: features {}, weights {:?}, bias {}, mask {}",
            h.ncols(),
            w.dim(),
            b.len(),
            mask.len()
        )));
    }
    let mut hm = h.clone();
    mul_rows(&mut hm, mask);
    let mut logits = hm.dot(&w.t());
    add_bias(&mut logits, b);
    Ok(logits)
}

/// Row-wise softmax with max subtraction. Each output row sums to one.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Masked dense layer followed by row softmax.
pub fn dense_softmax(
    h: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    mask: &Array1<f64>,
) -> Result<Array2<f64>> {
    Ok(softmax_rows(&dense_logits(h, w, b, mask)?))
}

/// Single-row convenience returning a validated categorical density.
pub fn dense_softmax_density(
    h: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    mask: &Array1<f64>,
) -> Result<CategoricalDensity> {
    if h.nrows() != 1 {
        return Err(Error::invalid(
            "dense_softmax_density expects a single-row activation",
        ));
    }
    let probs = dense_softmax(h, w, b, mask)?;
    // Renormalize away the last-ulp drift so construction cannot fail.
    let row = probs.row(0);
    let sum: f64 = row.sum();
    CategoricalDensity::new(row.iter().map(|&p| p / sum).collect())
}

/// Mean negative log-probability of the target classes:
/// `-(1/n) sum_r ln probs[r, target_r]`.
pub fn cross_entropy(probs: &Array2<f64>, targets: &[usize]) -> Result<f64> {
    if probs.nrows() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} probability rows scored against {} targets",
            probs.nrows(),
            targets.len()
        )));
    }
    let m = probs.ncols();
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= m {
            return Err(Error::invalid(format!(
                "target class {t} out of range for {m} classes"
            )));
        }
        loss -= probs[[r, t]].max(f64::MIN_POSITIVE).ln();
    }
    Ok(loss / targets.len() as f64)
}

/// Mean squared error over all elements.
pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "MSE shapes {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("MSE of empty arrays"));
    }
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(target.iter()) {
        let d = p - t;
        acc += d * d;
    }
    Ok(acc / pred.len() as f64)
}

/// Gradient of mean softmax cross-entropy w.r.t. the logits:
/// `(probs - onehot(target)) / n`. Returned alongside the loss so training
/// reuses one softmax evaluation.
pub fn softmax_xent_with_grad(
    logits: &Array2<f64>,
    targets: &[usize],
    scale: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let probs = softmax_rows(logits);
    let loss = cross_entropy(&probs, targets)? * scale * targets.len() as f64;
    let mut d_logits = probs.clone();
    for (r, &t) in targets.iter().enumerate() {
        d_logits[[r, t]] -= 1.0;
    }
    d_logits *= scale;
    Ok((loss, d_logits, probs))
}

/// Backward pass of the masked dense layer. Takes the masked features that
/// produced the logits and returns `(dW, db, dh)` where `dh` is the gradient
/// w.r.t. the unmasked features.
pub fn dense_backward(
    d_logits: &Array2<f64>,
    h: &Array2<f64>,
    w: &Array2<f64>,
    mask: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let mut hm = h.clone();
    mul_rows(&mut hm, mask);
    let d_w = d_logits.t().dot(&hm);
    let d_b = d_logits.sum_axis(Axis(0));
    let mut d_h = d_logits.dot(w);
    mul_rows(&mut d_h, mask);
    (d_w, d_b, d_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn softmax_rows_normalize() {
        let logits = arr2(&[[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0]]);
        let p = softmax_rows(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn softmax_is_translation_invariant() {
        let logits = arr2(&[[0.3, -1.2, 4.0]]);
        let shifted = logits.mapv(|v| v + 123.0);
        let a = softmax_rows(&logits);
        let b = softmax_rows(&shifted);
        let max = (&a - &b).iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        assert!(max < 1e-12);
    }

    #[test]
    fn uniform_cross_entropy_is_ln_m() {
        let probs = Array2::from_elem((3, 4), 0.25);
        let ce = cross_entropy(&probs, &[0, 2, 3]).unwrap();
        assert!((ce - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_hand_value() {
        let pred = arr2(&[[1.5]]);
        let target = arr2(&[[2.0]]);
        assert!((mse(&pred, &target).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn xent_grad_rows_sum_to_zero() {
        let logits = arr2(&[[0.1, -0.4, 2.0], [1.0, 1.0, 1.0]]);
        let (_, d_logits, _) = softmax_xent_with_grad(&logits, &[2, 0], 0.5).unwrap();
        for row in d_logits.rows() {
            assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn dense_mask_zeroes_features() {
        let h = arr2(&[[1.0, 2.0]]);
        let w = arr2(&[[1.0, 1.0], [0.5, -0.5]]);
        let b = ndarray::arr1(&[0.0, 1.0]);
        let mask = ndarray::arr1(&[1.0, 0.0]);
        let logits = dense_logits(&h, &w, &b, &mask).unwrap();
        assert!((logits[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((logits[[0, 1]] - 1.5).abs() < 1e-15);
    }
}
