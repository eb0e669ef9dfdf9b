//! Nesterov-accelerated adaptive moment optimizer.
//!
//! The update follows the momentum-scheduled rule popularized by the Keras
//! implementation. With gradient `g` at step `t` (1-based), decay constants
//! `beta1`, `beta2`, schedule decay `psi`, and the running product
//! `M_t = prod_{i<=t} mu_i`:
//!
//! ```text
//! mu_t   = beta1 * (1 - 0.5 * 0.96^(t * psi))
//! mu_t+1 = beta1 * (1 - 0.5 * 0.96^((t+1) * psi))
//! m      = beta1 * m + (1 - beta1) * g
//! v      = beta2 * v + (1 - beta2) * g^2
//! g_hat  = g / (1 - M_t)
//! m_hat  = m / (1 - M_t * mu_t+1)
//! v_hat  = v / (1 - beta2^t)
//! m_bar  = (1 - mu_t) * g_hat + mu_t+1 * m_hat
//! theta  = theta - alpha * m_bar / (sqrt(v_hat) + epsilon)
//! ```
//!
//! Defaults: `alpha = 0.002`, `beta1 = 0.9`, `beta2 = 0.999`, `psi = 0.004`,
//! `epsilon = 1e-8`. The scripted oracle test executes this exact rule
//! scalar-by-scalar and must agree with the vectorized implementation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub schedule_decay: f64,
    pub epsilon: f64,
}

impl Default for NadamHyper {
    fn default() -> Self {
        NadamHyper {
            alpha: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            schedule_decay: 0.004,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: step counter, momentum-schedule product, and first/second
/// moment accumulators mirroring the model's tensor list.
#[derive(Debug, Clone)]
pub struct NadamState {
    pub hyper: NadamHyper,
    t: u64,
    m_schedule: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl NadamState {
    pub fn new(hyper: NadamHyper, tensor_sizes: &[usize]) -> Self {
        NadamState {
            hyper,
            t: 0,
            m_schedule: 1.0,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update across all tensors. `params[j]` and `grads[j]` must
    /// have the sizes given at construction.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer tracks {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let h = self.hyper;
        self.t += 1;
        let t = self.t as f64;
        let mu_t = h.beta1 * (1.0 - 0.5 * 0.96f64.powf(t * h.schedule_decay));
        let mu_next = h.beta1 * (1.0 - 0.5 * 0.96f64.powf((t + 1.0) * h.schedule_decay));
        let m_schedule_new = self.m_schedule * mu_t;
        let m_schedule_next = m_schedule_new * mu_next;
        let bias2 = 1.0 - h.beta2.powf(t);

        for (j, theta) in params.iter_mut().enumerate() {
            let g_all = grads[j];
            if theta.len() != self.m[j].len() || g_all.len() != self.m[j].len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {j}: optimizer state size {} vs param {} / grad {}",
                    self.m[j].len(),
                    theta.len(),
                    g_all.len()
                )));
            }
            let m = &mut self.m[j];
            let v = &mut self.v[j];
            for k in 0..theta.len() {
                let g = g_all[k];
                m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g;
                v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
                let g_hat = g / (1.0 - m_schedule_new);
                let m_hat = m[k] / (1.0 - m_schedule_next);
                let v_hat = v[k] / bias2;
                let m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
                theta[k] -= h.alpha * m_bar / (v_hat.sqrt() + h.epsilon);
            }
        }
        self.m_schedule = m_schedule_new;
        Ok(())
    }
}

/// Scales all gradients in place so their global L2 norm does not exceed
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &x in g.iter() {
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal scalar transcription of the documented update rule, executed
    /// by hand for five steps on f(theta) = 0.5 * theta^2 (gradient theta).
    #[test]
    fn five_steps_on_quadratic_match_scalar_oracle() {
        let h = NadamHyper::default();
        let mut theta_oracle = 1.0f64;
        let mut m = 0.0f64;
        let mut v = 0.0f64;
        let mut msched = 1.0f64;
        let mut oracle_trace = Vec::new();
        for t in 1..=5 {
            let tf = t as f64;
            let g = theta_oracle;
            let mu_t = h.beta1 * (1.0 - 0.5 * 0.96f64.powf(tf * h.schedule_decay));
            let mu_next = h.beta1 * (1.0 - 0.5 * 0.96f64.powf((tf + 1.0) * h.schedule_decay));
            let msched_new = msched * mu_t;
            let msched_next = msched_new * mu_next;
            m = h.beta1 * m + (1.0 - h.beta1) * g;
            v = h.beta2 * v + (1.0 - h.beta2) * g * g;
            let g_hat = g / (1.0 - msched_new);
            let m_hat = m / (1.0 - msched_next);
            let v_hat = v / (1.0 - h.beta2.powf(tf));
            let m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
            theta_oracle -= h.alpha * m_bar / (v_hat.sqrt() + h.epsilon);
            msched = msched_new;
            oracle_trace.push(theta_oracle);
        }

        let mut state = NadamState::new(h, &[1]);
        let mut theta = [1.0f64];
        let mut impl_trace = Vec::new();
        for _ in 0..5 {
            let g = [theta[0]];
            state.step(vec![&mut theta], &[&g]).unwrap();
            impl_trace.push(theta[0]);
        }
        for (a, b) in impl_trace.iter().zip(&oracle_trace) {
            assert!(
                (a - b).abs() <= 1e-15 * b.abs().max(1.0),
                "implementation {a} vs oracle {b}"
            );
        }
        // The iterate must be moving toward the minimum at zero.
        assert!(impl_trace[4] < 1.0 && impl_trace[4] > 0.9);
    }

    #[test]
    fn clip_rescales_only_above_threshold() {
        let mut a = [3.0, 4.0];
        let mut b = [0.0];
        {
            let mut views: Vec<&mut [f64]> = vec![&mut a, &mut b];
            let norm = clip_global_norm(&mut views, 10.0);
            assert!((norm - 5.0).abs() < 1e-15);
        }
        assert_eq!(a, [3.0, 4.0]);
        {
            let mut views: Vec<&mut [f64]> = vec![&mut a, &mut b];
            clip_global_norm(&mut views, 1.0);
        }
        let norm_after = (a[0] * a[0] + a[1] * a[1]).sqrt();
        assert!((norm_after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn state_size_mismatch_is_error() {
        let mut state = NadamState::new(NadamHyper::default(), &[2]);
        let mut theta = [0.0f64; 3];
        let g = [0.0f64; 3];
        assert!(state.step(vec![&mut theta], &[&g]).is_err());
    }
}
