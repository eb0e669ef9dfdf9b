//! Autoregressive baseline: least-squares AR(p) coefficients, innovation
//! log-likelihood via Kalman filtering of the companion-form state space,
//! and closed-recursion Gaussian forecasts.
//!
//! The observation-noise variance exists only to condition the filtering
//! pass used for order selection. Forecasts anchor the state on the exact
//! last `p` observations with zero covariance and report the predictive
//! variance without the observation term, which is the exact limit of the
//! filter as that variance goes to zero for a fully observed series.

use nalgebra::{DMatrix, DVector};

use crate::dist::Gaussian;
use crate::error::{Error, Result};

/// Observation-noise variance used by the filtering pass.
pub const AR_OBS_NOISE_VAR: f64 = 1e-6;

/// Backstop for the innovation variance when the least-squares residuals
/// vanish (perfectly predictable series).
const INNOVATION_VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    /// Coefficients `phi_1..phi_p`; `phi_1` multiplies the most recent lag.
    pub coeffs: Vec<f64>,
    /// Innovation variance of the state equation.
    pub innovation_var: f64,
    /// Observation-noise variance used when filtering history.
    pub obs_noise_var: f64,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Companion-form transition matrix: first row is the coefficient
    /// vector, the subdiagonal shifts the lag stack down.
    fn transition(&self) -> DMatrix<f64> {
        let p = self.order();
        let mut f = DMatrix::zeros(p, p);
        for (j, &phi) in self.coeffs.iter().enumerate() {
            f[(0, j)] = phi;
        }
        for i in 1..p {
            f[(i, i - 1)] = 1.0;
        }
        f
    }
}

/// Fits AR(p) coefficients by least squares on the lagged design matrix,
/// solving the normal equations; a singular system falls back to a ridge
/// of 1e-8 on the diagonal. The innovation variance is the mean squared
/// residual. No intercept: the pipeline detrends and standardizes upstream.
pub fn fit_ar(series: &[f64], p: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::invalid("AR order must be positive"));
    }
    if series.len() <= 10 * p {
        return Err(Error::invalid(format!(
            "series of length {} is too short to fit AR({p}); need more than {}",
            series.len(),
            10 * p
        )));
    }
    if let Some(bad) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("series value {bad}")));
    }
    let rows = series.len() - p;
    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    // Row r regresses series[p + r] on the p preceding values, most recent
    // lag first.
    for r in 0..rows {
        let y = series[p + r];
        for j in 0..p {
            let xj = series[p + r - 1 - j];
            xty[j] += xj * y;
            for i in j..p {
                xtx[(i, j)] += series[p + r - 1 - i] * xj;
            }
        }
    }
    // Fill the symmetric upper triangle.
    for j in 0..p {
        for i in 0..j {
            xtx[(i, j)] = xtx[(j, i)];
        }
    }

    let solve = |m: &DMatrix<f64>| -> Option<DVector<f64>> {
        m.clone().cholesky().map(|c| c.solve(&xty))
    };
    let coeffs = match solve(&xtx) {
        Some(c) => c,
        None => {
            let mut ridged = xtx.clone();
            for i in 0..p {
                ridged[(i, i)] += 1e-8;
            }
            solve(&ridged).ok_or_else(|| {
                Error::numerical("AR normal equations singular even with ridge")
            })?
        }
    };

    let mut sse = 0.0;
    for r in 0..rows {
        let mut pred = 0.0;
        for j in 0..p {
            pred += coeffs[j] * series[p + r - 1 - j];
        }
        let e = series[p + r] - pred;
        sse += e * e;
    }
    let innovation_var = (sse / rows as f64).max(INNOVATION_VAR_FLOOR);
    Ok(ArModel {
        coeffs: coeffs.iter().copied().collect(),
        innovation_var,
        obs_noise_var: AR_OBS_NOISE_VAR,
    })
}

/// Innovation log-likelihood of `series` under the companion-form state
/// space, from a filter started on the first `p` observations. Used to
/// select the order on a held-out split.
pub fn kalman_filter_loglik(m: &ArModel, series: &[f64]) -> Result<f64> {
    let p = m.order();
    if series.len() <= p {
        return Err(Error::invalid(format!(
            "series of length {} cannot be filtered with order {p}",
            series.len()
        )));
    }
    let f = m.transition();
    let mut state = DVector::from_fn(p, |i, _| series[p - 1 - i]);
    let mut cov: DMatrix<f64> = DMatrix::zeros(p, p);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut loglik = 0.0;
    for &obs in &series[p..] {
        // Predict.
        state = &f * &state;
        cov = &f * &cov * f.transpose();
        cov[(0, 0)] += m.innovation_var;
        // Innovation.
        let s = cov[(0, 0)] + m.obs_noise_var;
        let v = obs - state[0];
        loglik -= 0.5 * (ln_2pi + s.ln() + v * v / s);
        // Update with gain K = P H^T / S (H selects the first component).
        let ph = cov.column(0).clone_owned();
        let gain = &ph / s;
        state += &gain * v;
        cov -= &gain * ph.transpose();
        // Symmetrize to keep the covariance PSD under rounding.
        cov = 0.5 * (&cov + cov.transpose());
        if !loglik.is_finite() || !state[0].is_finite() {
            return Err(Error::NonFinite("Kalman filter state".into()));
        }
    }
    Ok(loglik)
}

/// Gaussian forecast `p_h` steps past the end of `history`.
///
/// The recursion anchors on the exact last `p` observations (zero state
/// covariance) and runs predict-only steps; step `k` reports the predicted
/// observation mean and variance, the latter excluding the observation-noise
/// term. For stable coefficients the variance is nondecreasing in `k`.
pub fn kalman_forecast(m: &ArModel, history: &[f64], p_h: usize) -> Result<Vec<Gaussian>> {
    let p = m.order();
    if history.len() < p {
        return Err(Error::invalid(format!(
            "history of length {} is shorter than the AR order {p}",
            history.len()
        )));
    }
    if p_h == 0 {
        return Err(Error::invalid("forecast horizon must be positive"));
    }
    if let Some(bad) = history.iter().rev().take(p).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("history value {bad}")));
    }
    let f = m.transition();
    let n = history.len();
    let mut state = DVector::from_fn(p, |i, _| history[n - 1 - i]);
    let mut cov: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut out = Vec::with_capacity(p_h);
    for _ in 0..p_h {
        state = &f * &state;
        cov = &f * &cov * f.transpose();
        cov[(0, 0)] += m.innovation_var;
        cov = 0.5 * (&cov + cov.transpose());
        let mean = state[0];
        let var = cov[(0, 0)];
        if !mean.is_finite() || !var.is_finite() {
            return Err(Error::NonFinite("Kalman forecast".into()));
        }
        out.push(Gaussian::new(mean, var)?);
    }
    Ok(out)
}
