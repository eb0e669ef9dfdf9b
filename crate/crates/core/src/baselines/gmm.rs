//! Per-step Gaussian-mixture summarization of trajectory ensembles.
//!
//! Each horizon step's samples are fit with a one-dimensional variational
//! Bayes mixture: symmetric Dirichlet prior with concentration `1/K_max`
//! over the weights and a Normal-Gamma prior per component. The prior is
//! data-driven: its mean is the step's sample mean and its rate carries one
//! prior degree of freedom scaled by the step's population variance
//! (`a0 = 1/2`, `b0 = var/2`, `beta0 = 1`). With `K_max = 1` these choices
//! make the posterior mean/variance reproduce the ensemble's
//! moment-corrected Gaussian exactly. Components whose posterior weight
//! falls under 0.01 are pruned and the rest renormalized.

use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use super::TrajectoryEnsemble;
use crate::dist::GmmDensity;
use crate::error::{Error, Result};

const PRUNE_WEIGHT: f64 = 0.01;
const MAX_VB_ITERS: usize = 500;
const ELBO_TOL: f64 = 1e-9;
/// Floor on the prior rate `b0`, needed when a step's samples are all equal.
const B0_FLOOR: f64 = 1e-12;

struct Prior {
    alpha0: f64,
    m0: f64,
    beta0: f64,
    a0: f64,
    b0: f64,
}

/// Per-component posterior parameters.
struct Posterior {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    m: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

pub(crate) struct VbOutcome {
    pub density: GmmDensity,
    /// ELBO after each iteration; nondecreasing. Read by the unit tests.
    #[allow(dead_code)]
    pub elbo_trace: Vec<f64>,
    /// Posterior-mean weights before pruning, one per component. Read by
    /// the unit tests.
    #[allow(dead_code)]
    pub raw_weights: Vec<f64>,
}

fn m_step(samples: &[f64], resp: &[Vec<f64>], prior: &Prior, k: usize) -> Posterior {
    let mut n_k = vec![0.0; k];
    let mut sum_x = vec![0.0; k];
    let mut sum_xx = vec![0.0; k];
    for (n, x) in samples.iter().enumerate() {
        for j in 0..k {
            let r = resp[n][j];
            n_k[j] += r;
            sum_x[j] += r * x;
            sum_xx[j] += r * x * x;
        }
    }
    let mut post = Posterior {
        alpha: vec![0.0; k],
        beta: vec![0.0; k],
        m: vec![0.0; k],
        a: vec![0.0; k],
        b: vec![0.0; k],
    };
    for j in 0..k {
        let nj = n_k[j];
        let xbar = if nj > 1e-12 { sum_x[j] / nj } else { prior.m0 };
        // sum_n r (x - xbar)^2 via the second moment.
        let scatter = (sum_xx[j] - 2.0 * xbar * sum_x[j] + nj * xbar * xbar).max(0.0);
        post.alpha[j] = prior.alpha0 + nj;
        post.beta[j] = prior.beta0 + nj;
        post.m[j] = (prior.beta0 * prior.m0 + sum_x[j]) / post.beta[j];
        post.a[j] = prior.a0 + 0.5 * nj;
        let dm = xbar - prior.m0;
        post.b[j] = prior.b0 + 0.5 * (scatter + prior.beta0 * nj * dm * dm / post.beta[j]);
    }
    post
}

fn e_step(samples: &[f64], post: &Posterior, resp: &mut [Vec<f64>]) {
    let k = post.alpha.len();
    let alpha_hat: f64 = post.alpha.iter().sum();
    let psi_hat = digamma(alpha_hat);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let e_ln_pi: Vec<f64> = post.alpha.iter().map(|&a| digamma(a) - psi_hat).collect();
    let e_ln_tau: Vec<f64> = post
        .a
        .iter()
        .zip(&post.b)
        .map(|(&a, &b)| digamma(a) - b.ln())
        .collect();
    for (n, &x) in samples.iter().enumerate() {
        let mut ln_rho = vec![0.0; k];
        for j in 0..k {
            let d = x - post.m[j];
            let e_quad = 1.0 / post.beta[j] + post.a[j] / post.b[j] * d * d;
            ln_rho[j] = e_ln_pi[j] + 0.5 * (e_ln_tau[j] - ln_2pi - e_quad);
        }
        let max = ln_rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in ln_rho.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for (j, v) in ln_rho.iter().enumerate() {
            resp[n][j] = v / sum;
        }
    }
}

fn elbo(samples: &[f64], resp: &[Vec<f64>], post: &Posterior, prior: &Prior) -> f64 {
    let k = post.alpha.len();
    let alpha_hat: f64 = post.alpha.iter().sum();
    let psi_hat = digamma(alpha_hat);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    let mut n_k = vec![0.0; k];
    let mut quad = vec![0.0; k];
    for (n, &x) in samples.iter().enumerate() {
        for j in 0..k {
            let r = resp[n][j];
            let d = x - post.m[j];
            n_k[j] += r;
            quad[j] += r * d * d;
        }
    }

    let mut value = 0.0;
    for j in 0..k {
        let e_ln_pi = digamma(post.alpha[j]) - psi_hat;
        let e_ln_tau = digamma(post.a[j]) - post.b[j].ln();
        let e_tau = post.a[j] / post.b[j];

        // E[ln p(X | Z, mu, tau)]
        value += 0.5 * n_k[j] * (e_ln_tau - ln_2pi - 1.0 / post.beta[j]) - 0.5 * e_tau * quad[j];
        // E[ln p(Z | pi)]
        value += n_k[j] * e_ln_pi;
        // E[ln p(pi)] spread over components (the normalizer is added once
        // below); here only the (alpha0 - 1) E[ln pi_k] part.
        value += (prior.alpha0 - 1.0) * e_ln_pi;
        // E[ln p(mu, tau)]
        let dm = post.m[j] - prior.m0;
        let e_quad_prior = 1.0 / post.beta[j] + e_tau * dm * dm;
        value += 0.5 * ((prior.beta0 / (2.0 * std::f64::consts::PI)).ln() + e_ln_tau
            - prior.beta0 * e_quad_prior);
        value += prior.a0 * prior.b0.ln() - ln_gamma(prior.a0) + (prior.a0 - 1.0) * e_ln_tau
            - prior.b0 * e_tau;
        // -E[ln q(pi)] component part.
        value -= (post.alpha[j] - 1.0) * e_ln_pi - ln_gamma(post.alpha[j]);
        // -E[ln q(mu, tau)]
        value -= 0.5 * ((post.beta[j] / (2.0 * std::f64::consts::PI)).ln() + e_ln_tau - 1.0);
        value -= post.a[j] * post.b[j].ln() - ln_gamma(post.a[j])
            + (post.a[j] - 1.0) * e_ln_tau
            - post.a[j];
    }
    // Dirichlet normalizers of p(pi) and q(pi).
    value += ln_gamma(k as f64 * prior.alpha0) - k as f64 * ln_gamma(prior.alpha0);
    value -= ln_gamma(alpha_hat);
    // -E[ln q(Z)]
    for row in resp {
        for &r in row {
            if r > 0.0 {
                value -= r * r.ln();
            }
        }
    }
    value
}

/// Variational-Bayes fit of a 1-D Gaussian mixture with up to `k_max`
/// components. Deterministic: responsibilities start from a quantile split
/// of the samples, and iteration stops when the ELBO change falls under a
/// tolerance or after a fixed cap (the ELBO is nondecreasing, so the final
/// iterate is the best one).
pub(crate) fn vb_gmm_1d(samples: &[f64], k_max: usize) -> Result<VbOutcome> {
    let s = samples.len();
    if k_max == 0 {
        return Err(Error::invalid("k_max must be positive"));
    }
    if s < 2 {
        return Err(Error::invalid("mixture fit needs at least two samples"));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("mixture sample {bad}")));
    }
    let k = k_max.min(s);
    let mean = samples.iter().sum::<f64>() / s as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s as f64;
    let prior = Prior {
        alpha0: 1.0 / k as f64,
        m0: mean,
        beta0: 1.0,
        a0: 0.5,
        b0: (0.5 * var).max(B0_FLOOR),
    };

    // All samples (numerically) identical: the mixture question is
    // degenerate, so report the sole conjugate-update component directly.
    if var < 1e-28 * mean.mul_add(mean, 1.0) {
        let a = prior.a0 + 0.5 * s as f64;
        let density = GmmDensity::new(vec![1.0], vec![mean], vec![prior.b0 / a])?;
        return Ok(VbOutcome {
            density,
            elbo_trace: Vec::new(),
            raw_weights: vec![1.0],
        });
    }

    // Quantile initialization: contiguous rank buckets, ties broken by index.
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&i, &j| samples[i].partial_cmp(&samples[j]).unwrap().then(i.cmp(&j)));
    let mut resp = vec![vec![0.0; k]; s];
    for (rank, &n) in order.iter().enumerate() {
        let bucket = (rank * k / s).min(k - 1);
        resp[n][bucket] = 1.0;
    }

    let mut trace = Vec::new();
    let mut post = m_step(samples, &resp, &prior, k);
    loop {
        e_step(samples, &post, &mut resp);
        let value = elbo(samples, &resp, &post, &prior);
        let done = trace
            .last()
            .is_some_and(|prev: &f64| (value - prev).abs() <= ELBO_TOL * (1.0 + value.abs()))
            || trace.len() + 1 >= MAX_VB_ITERS;
        trace.push(value);
        if done {
            break;
        }
        post = m_step(samples, &resp, &prior, k);
    }

    let alpha_hat: f64 = post.alpha.iter().sum();
    let raw_weights: Vec<f64> = post.alpha.iter().map(|a| a / alpha_hat).collect();
    let mut kept: Vec<usize> = (0..k).filter(|&j| raw_weights[j] >= PRUNE_WEIGHT).collect();
    if kept.is_empty() {
        // Cannot happen for k <= 100 (the largest weight is at least 1/k),
        // but keep the dominant component as a backstop.
        let best = raw_weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
            .unwrap();
        kept = vec![best];
    }
    let total: f64 = kept.iter().map(|&j| raw_weights[j]).sum();
    let density = GmmDensity::new(
        kept.iter().map(|&j| raw_weights[j] / total).collect(),
        kept.iter().map(|&j| post.m[j]).collect(),
        kept.iter().map(|&j| post.b[j] / post.a[j]).collect(),
    )?;
    Ok(VbOutcome {
        density,
        elbo_trace: trace,
        raw_weights,
    })
}

/// Fits one mixture per horizon step of the ensemble. Steps are independent
/// fits and run in parallel; the output order is the step order.
pub fn fit_stepwise_gmm(ens: &TrajectoryEnsemble, k_max: usize) -> Result<Vec<GmmDensity>> {
    if ens.n_trajectories() < 2 {
        return Err(Error::invalid(
            "stepwise mixture summary needs at least two trajectories",
        ));
    }
    (0..ens.horizon())
        .into_par_iter()
        .map(|k| vb_gmm_1d(&ens.step_samples(k), k_max).map(|o| o.density))
        .collect()
}
