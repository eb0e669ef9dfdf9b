//! Reference forecasters the ordinal model is compared against: an AR(p)
//! state-space model filtered and extrapolated with the Kalman recursions, a
//! Matérn 5/2 ARD Gaussian process whose predictive uncertainty is
//! propagated by Monte-Carlo rollouts, and a per-step variational-Bayes
//! Gaussian-mixture summarizer for trajectory ensembles.

mod ar;
mod gmm;
mod gp;

pub use ar::{fit_ar, kalman_filter_loglik, kalman_forecast, ArModel};
pub use gmm::fit_stepwise_gmm;
pub use gp::{
    fit_gp, gp_mc_trajectories, gp_predict, gp_with_hyper, lml_with_gradient, matern52,
    strided_subset, GpHyper, GpModel,
};

use crate::dist::{ForecastDensities, Gaussian};
use crate::error::{Error, Result};

/// Where a trajectory ensemble came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryOrigin {
    Gp,
    Model,
}

/// A bundle of `S` sampled forecast paths, each `P_h` steps long.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    /// Row = trajectory, column = horizon step. All rows have equal length.
    pub trajectories: Vec<Vec<f64>>,
    pub origin: TrajectoryOrigin,
}

impl TrajectoryEnsemble {
    pub fn new(trajectories: Vec<Vec<f64>>, origin: TrajectoryOrigin) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::invalid("trajectory ensemble needs at least one row"));
        }
        let p_h = trajectories[0].len();
        if p_h == 0 {
            return Err(Error::invalid("trajectories must cover at least one step"));
        }
        for t in &trajectories {
            if t.len() != p_h {
                return Err(Error::ShapeMismatch(format!(
                    "trajectory lengths differ: {} vs {p_h}",
                    t.len()
                )));
            }
            if let Some(bad) = t.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("trajectory value {bad}")));
            }
        }
        Ok(TrajectoryEnsemble {
            trajectories,
            origin,
        })
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].len()
    }

    /// Samples of one horizon step across all trajectories.
    pub fn step_samples(&self, k: usize) -> Vec<f64> {
        self.trajectories.iter().map(|t| t[k]).collect()
    }
}

/// The moment-corrected Gaussian summary of an ensemble: per step, the
/// sample mean and the population variance `(1/S) * sum((x - mean)^2)`.
/// Returned raw (a step where every trajectory agrees has variance exactly
/// zero); [`moments_to_gaussian`] applies the density floor.
pub fn correct_moments(ens: &TrajectoryEnsemble) -> Result<Vec<(f64, f64)>> {
    let s = ens.n_trajectories();
    if s < 2 {
        return Err(Error::invalid(
            "moment correction needs at least two trajectories",
        ));
    }
    let inv = 1.0 / s as f64;
    Ok((0..ens.horizon())
        .map(|k| {
            let mean = ens.trajectories.iter().map(|t| t[k]).sum::<f64>() * inv;
            let var = ens
                .trajectories
                .iter()
                .map(|t| {
                    let d = t[k] - mean;
                    d * d
                })
                .sum::<f64>()
                * inv;
            (mean, var)
        })
        .collect())
}

/// Converts raw per-step moments into a Gaussian forecast, flooring the
/// variance at the same 1e-8 the regression ensemble uses so a degenerate
/// step still yields a valid density.
pub fn moments_to_gaussian(moments: &[(f64, f64)]) -> Result<ForecastDensities> {
    let steps = moments
        .iter()
        .map(|&(mean, var)| Gaussian::new(mean, var.max(crate::seq2seq::REGRESSION_VAR_FLOOR)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastDensities::Gaussian { steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_correction_uses_population_normalization() {
        let ens = TrajectoryEnsemble::new(vec![vec![0.0, 5.0], vec![2.0, 5.0]], TrajectoryOrigin::Gp)
            .unwrap();
        let m = correct_moments(&ens).unwrap();
        assert_eq!(m[0], (1.0, 1.0));
        // All trajectories identical at a step: variance exactly zero.
        assert_eq!(m[1], (5.0, 0.0));
    }

    #[test]
    fn moment_correction_matches_two_pass_recomputation() {
        let trajectories: Vec<Vec<f64>> = (0..7)
            .map(|s| (0..4).map(|k| ((s * 13 + k * 7) % 11) as f64 * 0.37 - 1.5).collect())
            .collect();
        let ens = TrajectoryEnsemble::new(trajectories.clone(), TrajectoryOrigin::Model).unwrap();
        let got = correct_moments(&ens).unwrap();
        for k in 0..4 {
            let vals: Vec<f64> = trajectories.iter().map(|t| t[k]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!((got[k].0 - mean).abs() < 1e-15);
            assert!((got[k].1 - var).abs() < 1e-15);
        }
    }

    #[test]
    fn single_trajectory_is_rejected() {
        let ens =
            TrajectoryEnsemble::new(vec![vec![1.0, 2.0]], TrajectoryOrigin::Gp).unwrap();
        assert!(correct_moments(&ens).is_err());
    }

    #[test]
    fn ragged_or_empty_ensembles_are_rejected() {
        assert!(TrajectoryEnsemble::new(vec![], TrajectoryOrigin::Gp).is_err());
        assert!(
            TrajectoryEnsemble::new(vec![vec![1.0], vec![1.0, 2.0]], TrajectoryOrigin::Gp).is_err()
        );
        assert!(TrajectoryEnsemble::new(vec![vec![f64::NAN]], TrajectoryOrigin::Gp).is_err());
    }

    #[test]
    fn degenerate_moments_floor_into_a_valid_density() {
        let fc = moments_to_gaussian(&[(3.0, 0.0), (1.0, 2.0)]).unwrap();
        match fc {
            ForecastDensities::Gaussian { steps } => {
                assert_eq!(steps[0].var, crate::seq2seq::REGRESSION_VAR_FLOOR);
                assert_eq!(steps[1].var, 2.0);
            }
            other => panic!("expected Gaussian forecast, got {other:?}"),
        }
    }
}
