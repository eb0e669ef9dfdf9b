//! Per-step predictive distributions shared across forecasters.
//!
//! Forecasts come in three families: categorical densities over ordinal bins
//! (read as piecewise-uniform), Gaussians, and Gaussian mixtures. The
//! [`ForecastDensities`] enum carries a whole horizon of one family so the
//! metric suite can score any forecaster through one interface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordinal::{piecewise_uniform_logpdf, BinPartition, CategoricalDensity};

const LN_2PI: f64 = 1.8378770664093453;

/// Gaussian with mean and variance (not standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() || !var.is_finite() {
            return Err(Error::NonFinite("Gaussian parameters".into()));
        }
        if var <= 0.0 {
            return Err(Error::invalid(format!(
                "Gaussian variance must be positive, got {var}"
            )));
        }
        Ok(Gaussian { mean, var })
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (LN_2PI + self.var.ln() + d * d / self.var)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / (2.0 * self.var).sqrt();
        0.5 * (1.0 + statrs::function::erf::erf(z))
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.var.sqrt() * z
    }
}

/// One-dimensional Gaussian mixture: weights sum to one, variances positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmDensity {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

impl GmmDensity {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != vars.len() {
            return Err(Error::ShapeMismatch(
                "mixture weights/means/vars must be nonempty and equal length".into(),
            ));
        }
        let mut sum = 0.0;
        for (&w, &v) in weights.iter().zip(&vars) {
            if !(w.is_finite() && v.is_finite()) {
                return Err(Error::NonFinite("mixture parameters".into()));
            }
            if w < 0.0 || v <= 0.0 {
                return Err(Error::invalid(
                    "mixture weights must be >= 0 and variances > 0",
                ));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {sum}, expected 1 within 1e-9"
            )));
        }
        Ok(GmmDensity {
            weights,
            means,
            vars,
        })
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    /// Log-density via log-sum-exp over components.
    pub fn logpdf(&self, x: f64) -> f64 {
        let mut terms = Vec::with_capacity(self.weights.len());
        for k in 0..self.weights.len() {
            if self.weights[k] == 0.0 {
                continue;
            }
            let d = x - self.means[k];
            terms.push(
                self.weights[k].ln() - 0.5 * (LN_2PI + self.vars[k].ln() + d * d / self.vars[k]),
            );
        }
        if terms.is_empty() {
            return f64::NEG_INFINITY;
        }
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.vars))
            .map(|(&w, (&m, &v))| w * Gaussian { mean: m, var: v }.cdf(x))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(&w, &m)| w * m)
            .sum()
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> f64 {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            cum += w;
            if u <= cum {
                k = i;
                break;
            }
        }
        Gaussian {
            mean: self.means[k],
            var: self.vars[k],
        }
        .sample(rng)
    }
}

/// Quantile of a continuous CDF by bisection. The bracket is expanded
/// geometrically from the seed interval until it encloses the level, then
/// bisected until its width falls below `tol`.
pub(crate) fn quantile_by_bisection(
    cdf: &dyn Fn(f64) -> f64,
    alpha: f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("quantile level must lie in [0, 1]"));
    }
    let mut width = (hi - lo).max(tol);
    for _ in 0..200 {
        if cdf(lo) <= alpha {
            break;
        }
        lo -= width;
        width *= 2.0;
    }
    width = (hi - lo).max(tol);
    for _ in 0..200 {
        if cdf(hi) >= alpha {
            break;
        }
        hi += width;
        width *= 2.0;
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::numerical("quantile bracket expansion failed"));
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if cdf(mid) >= alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root-finding tolerance for Gaussian / mixture quantiles.
pub const QUANTILE_TOL: f64 = 1e-9;

impl Gaussian {
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        let sd = self.var.sqrt();
        quantile_by_bisection(
            &|x| self.cdf(x),
            alpha,
            self.mean - 20.0 * sd,
            self.mean + 20.0 * sd,
            QUANTILE_TOL,
        )
    }
}

impl GmmDensity {
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        let lo = self
            .means
            .iter()
            .zip(&self.vars)
            .map(|(&m, &v)| m - 20.0 * v.sqrt())
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .means
            .iter()
            .zip(&self.vars)
            .map(|(&m, &v)| m + 20.0 * v.sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        quantile_by_bisection(&|x| self.cdf(x), alpha, lo, hi, QUANTILE_TOL)
    }
}

/// A full forecast horizon of per-step densities from one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ForecastDensities {
    Categorical {
        partition: BinPartition,
        steps: Vec<CategoricalDensity>,
    },
    Gaussian {
        steps: Vec<Gaussian>,
    },
    Gmm {
        steps: Vec<GmmDensity>,
    },
}

impl ForecastDensities {
    pub fn horizon(&self) -> usize {
        match self {
            ForecastDensities::Categorical { steps, .. } => steps.len(),
            ForecastDensities::Gaussian { steps } => steps.len(),
            ForecastDensities::Gmm { steps } => steps.len(),
        }
    }

    /// Log-density of `x` under step `k`.
    pub fn logpdf_at(&self, k: usize, x: f64) -> Result<f64> {
        let horizon = self.horizon();
        if k >= horizon {
            return Err(Error::invalid(format!(
                "step {k} out of range for horizon {horizon}"
            )));
        }
        match self {
            ForecastDensities::Categorical { partition, steps } => {
                piecewise_uniform_logpdf(x, &steps[k], partition)
            }
            ForecastDensities::Gaussian { steps } => Ok(steps[k].logpdf(x)),
            ForecastDensities::Gmm { steps } => Ok(steps[k].logpdf(x)),
        }
    }

    /// Quantile of step `k` at level `alpha`.
    pub fn quantile_at(&self, k: usize, alpha: f64) -> Result<f64> {
        match self {
            ForecastDensities::Categorical { partition, steps } => {
                steps[k].quantile(partition, alpha)
            }
            ForecastDensities::Gaussian { steps } => steps[k].quantile(alpha),
            ForecastDensities::Gmm { steps } => steps[k].quantile(alpha),
        }
    }

    /// Expected value of step `k`.
    pub fn mean_at(&self, k: usize) -> Result<f64> {
        match self {
            ForecastDensities::Categorical { partition, steps } => steps[k].mean(partition),
            ForecastDensities::Gaussian { steps } => Ok(steps[k].mean),
            ForecastDensities::Gmm { steps } => Ok(steps[k].mean()),
        }
    }

    /// Median (0.5 quantile) of step `k`.
    pub fn median_at(&self, k: usize) -> Result<f64> {
        self.quantile_at(k, 0.5)
    }

    /// Draws one value from step `k`. Categorical steps sample a bin and then
    /// a uniform value within it (the piecewise-uniform reading).
    pub fn sample_at(&self, k: usize, rng: &mut impl rand::Rng) -> Result<f64> {
        match self {
            ForecastDensities::Categorical { partition, steps } => {
                let u: f64 = rng.gen();
                let probs = steps[k].probs();
                let mut cum = 0.0;
                let mut bin = probs.len() - 1;
                for (i, &p) in probs.iter().enumerate() {
                    cum += p;
                    if u <= cum {
                        bin = i;
                        break;
                    }
                }
                let frac: f64 = rng.gen();
                Ok(partition.bin_lower(bin) + frac * partition.bin_width())
            }
            ForecastDensities::Gaussian { steps } => Ok(steps[k].sample(rng)),
            ForecastDensities::Gmm { steps } => Ok(steps[k].sample(rng)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_logpdf_matches_closed_form() {
        let g = Gaussian::new(1.0, 4.0).unwrap();
        // N(1, 4) at x = 1: -0.5 ln(2*pi*4)
        let expect = -0.5 * (LN_2PI + 4.0f64.ln());
        assert!((g.logpdf(1.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn gaussian_quantile_inverts_cdf() {
        let g = Gaussian::new(-2.0, 9.0).unwrap();
        for &alpha in &[0.025, 0.25, 0.5, 0.75, 0.975] {
            let q = g.quantile(alpha).unwrap();
            assert!((g.cdf(q) - alpha).abs() < 1e-8);
        }
        assert!((g.quantile(0.5).unwrap() - -2.0).abs() < 1e-8);
    }

    #[test]
    fn gmm_logpdf_matches_direct_sum() {
        let gmm = GmmDensity::new(vec![0.3, 0.7], vec![-1.0, 2.0], vec![1.0, 0.5]).unwrap();
        let x = 0.4;
        let direct = (0.3 * Gaussian::new(-1.0, 1.0).unwrap().logpdf(x).exp()
            + 0.7 * Gaussian::new(2.0, 0.5).unwrap().logpdf(x).exp())
        .ln();
        assert!((gmm.logpdf(x) - direct).abs() < 1e-12);
    }

    #[test]
    fn gmm_weights_must_normalize() {
        assert!(GmmDensity::new(vec![0.5, 0.6], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GmmDensity::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn gmm_quantile_is_monotone() {
        let gmm = GmmDensity::new(vec![0.5, 0.5], vec![-5.0, 5.0], vec![1.0, 1.0]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..20 {
            let q = gmm.quantile(i as f64 / 20.0).unwrap();
            assert!(q >= prev);
            prev = q;
        }
        assert!((gmm.cdf(gmm.quantile(0.5).unwrap()) - 0.5).abs() < 1e-8);
    }
}
