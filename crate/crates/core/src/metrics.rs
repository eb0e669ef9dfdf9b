//! Forecast evaluation: point-forecast deviations, sequence likelihoods,
//! calibration distance, and cross-model rank aggregation.
//!
//! Point metrics (SMAPE, RMSE) are computed twice per forecast, against the
//! per-step mean and against the per-step median of the predictive
//! distribution. Likelihoods score the open-loop per-step densities against
//! ground truth. The calibration distance integrates the squared gap
//! between nominal and empirical quantile coverage over the unit interval.

use serde::{Deserialize, Serialize};

use crate::dist::ForecastDensities;
use crate::error::{Error, Result};

/// Horizon truncation used for the secondary calibration column.
pub const QQDIST_TRUNCATION: usize = 250;

/// One quantile level's per-step curve over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSeries {
    pub alpha: f64,
    pub values: Vec<f64>,
}

/// Symmetric mean absolute percentage error, `(2/n) * sum |x - y| / (|x| + |y|)`.
/// Terms whose denominator is zero contribute nothing (both values are zero,
/// so the forecast is exact there). Bounded in `[0, 2]`.
pub fn smape(truth: &[f64], forecast: &[f64]) -> Result<f64> {
    if truth.len() != forecast.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth values vs {} forecast values",
            truth.len(),
            forecast.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("SMAPE of an empty horizon"));
    }
    let mut sum = 0.0;
    for (&x, &y) in truth.iter().zip(forecast) {
        let denom = x.abs() + y.abs();
        if denom > 0.0 {
            sum += (x - y).abs() / denom;
        }
    }
    Ok(2.0 * sum / truth.len() as f64)
}

/// Root mean squared error.
pub fn rmse(truth: &[f64], forecast: &[f64]) -> Result<f64> {
    if truth.len() != forecast.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth values vs {} forecast values",
            truth.len(),
            forecast.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("RMSE of an empty horizon"));
    }
    let sse: f64 = truth
        .iter()
        .zip(forecast)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok((sse / truth.len() as f64).sqrt())
}

fn check_horizon(truth: &[f64], dist: &ForecastDensities) -> Result<()> {
    if truth.len() != dist.horizon() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth values vs horizon {}",
            truth.len(),
            dist.horizon()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("likelihood of an empty horizon"));
    }
    Ok(())
}

fn step_nlls(truth: &[f64], dist: &ForecastDensities) -> Result<Vec<f64>> {
    truth
        .iter()
        .enumerate()
        .map(|(k, &x)| dist.logpdf_at(k, x).map(|lp| -lp))
        .collect()
}

/// Negative log-likelihood of the truth sequence under the forecast's
/// per-step densities.
pub fn forecast_nll(truth: &[f64], dist: &ForecastDensities) -> Result<f64> {
    check_horizon(truth, dist)?;
    Ok(step_nlls(truth, dist)?.iter().sum())
}

/// Cumulative NLL: the sum of the NLLs of every prefix of the horizon,
/// which weights step `k` (1-based) by `horizon - k + 1`.
pub fn cumulative_nll(truth: &[f64], dist: &ForecastDensities) -> Result<f64> {
    check_horizon(truth, dist)?;
    let nlls = step_nlls(truth, dist)?;
    let p_h = nlls.len();
    Ok(nlls
        .iter()
        .enumerate()
        .map(|(k, nll)| (p_h - k) as f64 * nll)
        .sum())
}

/// Per-step inverse CDF at level `alpha`. Categorical steps interpolate
/// cumulative mass within the bin; continuous steps run root-finding on the
/// CDF to a 1e-9 tolerance.
pub fn quantile_series(dist: &ForecastDensities, alpha: f64) -> Result<QuantileSeries> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "quantile level must lie strictly inside (0, 1), got {alpha}"
        )));
    }
    let values = (0..dist.horizon())
        .map(|k| dist.quantile_at(k, alpha))
        .collect::<Result<Vec<f64>>>()?;
    Ok(QuantileSeries { alpha, values })
}

/// Calibration distance: the integral over quantile levels of the squared
/// gap between the nominal level `alpha` and the empirical coverage
/// `r_alpha` (the fraction of the first `horizon_cap` truth points strictly
/// below the alpha-quantile curve; ties count as not-below).
///
/// The integral is a trapezoid over the level grid {0.01, ..., 0.99},
/// extended to the endpoints by holding `r` constant from the outermost
/// evaluated levels. The extremal coverages (`r` identically 0 or 1) then
/// integrate to 1/3 within 2e-5; the convexity of the extremal integrand
/// means the result can overshoot the continuum bound of 1/3 by that much.
pub fn qqdist(truth: &[f64], dist: &ForecastDensities, horizon_cap: usize) -> Result<f64> {
    check_horizon(truth, dist)?;
    if horizon_cap == 0 || horizon_cap > dist.horizon() {
        return Err(Error::invalid(format!(
            "horizon cap {horizon_cap} outside 1..={}",
            dist.horizon()
        )));
    }
    let n = horizon_cap as f64;
    let mut coverage = Vec::with_capacity(99);
    for i in 1..100 {
        let alpha = i as f64 / 100.0;
        let q = quantile_series(dist, alpha)?;
        let below = truth[..horizon_cap]
            .iter()
            .zip(&q.values)
            .filter(|(&x, &qv)| x < qv)
            .count();
        coverage.push(below as f64 / n);
    }
    // Node 0 holds r from alpha = 0.01, node 100 from alpha = 0.99.
    let mut integral = 0.0;
    let gap = |i: usize| {
        let alpha = i as f64 / 100.0;
        let r = coverage[i.clamp(1, 99) - 1];
        (r - alpha) * (r - alpha)
    };
    for i in 0..100 {
        integral += 0.5 * (gap(i) + gap(i + 1)) * 0.01;
    }
    Ok(integral)
}

/// Per-step mean of the predictive distribution.
pub fn mean_point_forecast(dist: &ForecastDensities) -> Result<Vec<f64>> {
    (0..dist.horizon()).map(|k| dist.mean_at(k)).collect()
}

/// Per-step median of the predictive distribution.
pub fn median_point_forecast(dist: &ForecastDensities) -> Result<Vec<f64>> {
    (0..dist.horizon()).map(|k| dist.median_at(k)).collect()
}

/// Evaluation record for one (model, dataset) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub dataset: String,
    pub mean_smape: f64,
    pub median_smape: f64,
    pub mean_rmse: f64,
    pub median_rmse: f64,
    pub nll: f64,
    pub cnll: f64,
    pub qqdist: f64,
    pub qqdist_250: f64,
}

/// Metric column names, in the order used by every table.
pub const METRIC_NAMES: [&str; 8] = [
    "mean-smape",
    "median-smape",
    "mean-rmse",
    "median-rmse",
    "nll",
    "cnll",
    "qqdist",
    "qqdist-250",
];

impl MetricsReport {
    pub fn metric_values(&self) -> [f64; 8] {
        [
            self.mean_smape,
            self.median_smape,
            self.mean_rmse,
            self.median_rmse,
            self.nll,
            self.cnll,
            self.qqdist,
            self.qqdist_250,
        ]
    }

    pub fn csv_header() -> &'static str {
        "model,dataset,mean_smape,median_smape,mean_rmse,median_rmse,nll,cnll,qqdist,qqdist_250"
    }

    pub fn csv_row(&self) -> String {
        let vals = self
            .metric_values()
            .iter()
            .map(|v| format!("{v:.12e}"))
            .collect::<Vec<_>>()
            .join(",");
        format!("{},{},{}", self.model, self.dataset, vals)
    }
}

/// Computes the full metric suite for one forecast. The truncated
/// calibration column uses the first [`QQDIST_TRUNCATION`] steps, or the
/// whole horizon when it is shorter than that.
pub fn evaluate_forecast(
    model: &str,
    dataset: &str,
    truth: &[f64],
    dist: &ForecastDensities,
) -> Result<MetricsReport> {
    check_horizon(truth, dist)?;
    let means = mean_point_forecast(dist)?;
    let medians = median_point_forecast(dist)?;
    let cap = QQDIST_TRUNCATION.min(dist.horizon());
    Ok(MetricsReport {
        model: model.to_string(),
        dataset: dataset.to_string(),
        mean_smape: smape(truth, &means)?,
        median_smape: smape(truth, &medians)?,
        mean_rmse: rmse(truth, &means)?,
        median_rmse: rmse(truth, &medians)?,
        nll: forecast_nll(truth, dist)?,
        cnll: cumulative_nll(truth, dist)?,
        qqdist: qqdist(truth, dist, dist.horizon())?,
        qqdist_250: qqdist(truth, dist, cap)?,
    })
}

/// Cross-model aggregation tables. All matrices are `[metric][model]`,
/// aligned with `metrics` and `models`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTables {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    pub metrics: Vec<String>,
    /// Number of datasets on which the model is the best performer.
    pub best_count: Vec<Vec<usize>>,
    /// Mean rank over datasets; rank 0 is the best performer.
    pub mean_rank: Vec<Vec<f64>>,
    /// Mean rank over datasets counted from the bottom; rank 0 is the worst.
    pub mean_worst_rank: Vec<Vec<f64>>,
}

const GP_VARIANTS: [&str; 2] = ["gp-mc", "gp-gmm"];
const GP_MERGED: &str = "gp";

fn push_unique(list: &mut Vec<String>, name: &str) {
    if !list.iter().any(|m| m == name) {
        list.push(name.to_string());
    }
}

/// Builds the rank aggregation tables from a complete grid of reports.
///
/// When both Gaussian-process variants are present they are merged into a
/// single "gp" row by keeping, per dataset and metric, the better (lower)
/// value before ranking. Ranks are assigned per (dataset, metric) by
/// sorting values ascending; ties go to the earlier-listed model, and
/// symmetrically to the later-listed model in the worst-rank table.
pub fn rank_tables(reports: &[MetricsReport]) -> Result<RankTables> {
    if reports.is_empty() {
        return Err(Error::invalid("rank tables need at least one report"));
    }
    let mut raw_models = Vec::new();
    let mut datasets = Vec::new();
    for r in reports {
        push_unique(&mut raw_models, &r.model);
        push_unique(&mut datasets, &r.dataset);
    }
    let mut missing = Vec::new();
    for m in &raw_models {
        for d in &datasets {
            if !reports.iter().any(|r| &r.model == m && &r.dataset == d) {
                missing.push(format!("({m}, {d})"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "missing report cells: {}",
            missing.join(", ")
        )));
    }

    let merge_gp = GP_VARIANTS.iter().all(|v| raw_models.iter().any(|m| m == v));
    let mut models = Vec::new();
    for m in &raw_models {
        if merge_gp && GP_VARIANTS.contains(&m.as_str()) {
            push_unique(&mut models, GP_MERGED);
        } else {
            push_unique(&mut models, m);
        }
    }

    // values[metric][dataset][model]
    let n_models = models.len();
    let n_metrics = METRIC_NAMES.len();
    let mut values = vec![vec![vec![f64::INFINITY; n_models]; datasets.len()]; n_metrics];
    for r in reports {
        let name = if merge_gp && GP_VARIANTS.contains(&r.model.as_str()) {
            GP_MERGED
        } else {
            r.model.as_str()
        };
        let mi = models.iter().position(|m| m == name).unwrap();
        let di = datasets.iter().position(|d| d == &r.dataset).unwrap();
        for (qi, v) in r.metric_values().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "metric {} for ({}, {})",
                    METRIC_NAMES[qi], r.model, r.dataset
                )));
            }
            if *v < values[qi][di][mi] {
                values[qi][di][mi] = *v;
            }
        }
    }

    let mut best_count = vec![vec![0usize; n_models]; n_metrics];
    let mut mean_rank = vec![vec![0.0; n_models]; n_metrics];
    let mut mean_worst_rank = vec![vec![0.0; n_models]; n_metrics];
    for qi in 0..n_metrics {
        for di in 0..datasets.len() {
            let row = &values[qi][di];
            // Ascending sort; stable, so ties keep model-list order.
            let mut order: Vec<usize> = (0..n_models).collect();
            order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap());
            for (rank, &mi) in order.iter().enumerate() {
                mean_rank[qi][mi] += rank as f64;
                if rank == 0 {
                    best_count[qi][mi] += 1;
                }
            }
            // Worst-first ranking: descending values, ties keep the
            // later-listed model at the lower (worse) rank by symmetry.
            let mut worst_order: Vec<usize> = (0..n_models).collect();
            worst_order.sort_by(|&a, &b| {
                row[b].partial_cmp(&row[a]).unwrap().then(b.cmp(&a))
            });
            for (rank, &mi) in worst_order.iter().enumerate() {
                mean_worst_rank[qi][mi] += rank as f64;
            }
        }
    }
    let nd = datasets.len() as f64;
    for qi in 0..n_metrics {
        for mi in 0..n_models {
            mean_rank[qi][mi] /= nd;
            mean_worst_rank[qi][mi] /= nd;
        }
    }
    Ok(RankTables {
        models,
        datasets,
        metrics: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
        best_count,
        mean_rank,
        mean_worst_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Gaussian, GmmDensity};
    use crate::ordinal::{sequence_nll, BinPartition, CategoricalDensity};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_dist(params: &[(f64, f64)]) -> ForecastDensities {
        ForecastDensities::Gaussian {
            steps: params
                .iter()
                .map(|&(m, v)| Gaussian::new(m, v).unwrap())
                .collect(),
        }
    }

    #[test]
    fn smape_hits_its_bounds() {
        assert_eq!(smape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((smape(&[1.0], &[3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((smape(&[1.0], &[-1.0]).unwrap() - 2.0).abs() < 1e-15);
        // Zero-denominator terms contribute nothing.
        assert_eq!(smape(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(smape(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_matches_hand_values() {
        assert_eq!(rmse(&[5.0, -2.0], &[5.0, -2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        let shifted: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|x| x + 0.7).collect();
        assert!((rmse(&[1.0, 2.0, 3.0], &shifted).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn nll_of_a_unit_gaussian_at_its_mean() {
        let dist = gaussian_dist(&[(2.0, 1.0)]);
        let nll = forecast_nll(&[2.0], &dist).unwrap();
        assert!((nll - 0.9189385332046727).abs() < 1e-12);
        let two = gaussian_dist(&[(2.0, 1.0), (2.0, 1.0)]);
        assert!((forecast_nll(&[2.0, 2.0], &two).unwrap() - 2.0 * nll).abs() < 1e-12);
    }

    #[test]
    fn categorical_nll_equals_the_ordinal_sequence_nll() {
        let partition = BinPartition::new(0.0, 1.0, 5).unwrap();
        let steps = vec![
            CategoricalDensity::new(vec![0.1, 0.2, 0.3, 0.25, 0.15]).unwrap(),
            CategoricalDensity::new(vec![0.5, 0.1, 0.1, 0.1, 0.2]).unwrap(),
        ];
        let truth = [0.55, 0.05];
        let via_ordinal = sequence_nll(&steps, &truth, &partition).unwrap();
        let dist = ForecastDensities::Categorical {
            partition,
            steps,
        };
        let via_metrics = forecast_nll(&truth, &dist).unwrap();
        assert!((via_metrics - via_ordinal).abs() < 1e-12);
    }

    #[test]
    fn cumulative_nll_weights_prefixes() {
        let dist = gaussian_dist(&[(0.0, 1.0), (1.0, 2.0)]);
        let truth = [0.3, -0.4];
        let a = -dist.logpdf_at(0, truth[0]).unwrap();
        let b = -dist.logpdf_at(1, truth[1]).unwrap();
        let cnll = cumulative_nll(&truth, &dist).unwrap();
        assert!((cnll - (2.0 * a + b)).abs() < 1e-12);

        let single = gaussian_dist(&[(0.0, 1.0)]);
        assert_eq!(
            cumulative_nll(&[0.3], &single).unwrap(),
            forecast_nll(&[0.3], &single).unwrap()
        );
    }

    #[test]
    fn cumulative_nll_matches_the_double_loop_oracle() {
        let params: Vec<(f64, f64)> = (0..7)
            .map(|k| (0.1 * k as f64, 1.0 + 0.2 * k as f64))
            .collect();
        let dist = gaussian_dist(&params);
        let truth: Vec<f64> = (0..7).map(|k| 0.15 * k as f64 - 0.2).collect();
        let fast = cumulative_nll(&truth, &dist).unwrap();
        let mut slow = 0.0;
        for prefix in 1..=truth.len() {
            for k in 0..prefix {
                slow -= dist.logpdf_at(k, truth[k]).unwrap();
            }
        }
        assert!((fast - slow).abs() < 1e-12 * slow.abs().max(1.0));
    }

    #[test]
    fn quantile_series_basics() {
        let partition = BinPartition::new(0.0, 1.0, 4).unwrap();
        let dist = ForecastDensities::Categorical {
            partition,
            steps: vec![CategoricalDensity::uniform(4).unwrap()],
        };
        let q = quantile_series(&dist, 0.5).unwrap();
        assert!((q.values[0] - 0.5).abs() < 1e-12);

        let g = gaussian_dist(&[(3.0, 4.0)]);
        let med = quantile_series(&g, 0.5).unwrap();
        assert!((med.values[0] - 3.0).abs() < 1e-8);

        let gmm = ForecastDensities::Gmm {
            steps: vec![
                GmmDensity::new(vec![0.4, 0.6], vec![-1.0, 2.0], vec![0.5, 1.5]).unwrap(),
            ],
        };
        let mut prev = f64::NEG_INFINITY;
        for i in 1..10 {
            let q = quantile_series(&gmm, i as f64 / 10.0).unwrap();
            assert!(q.values[0] >= prev);
            prev = q.values[0];
        }
        assert!(quantile_series(&g, 0.0).is_err());
        assert!(quantile_series(&g, 1.0).is_err());
    }

    #[test]
    fn qqdist_extremes_approach_one_third() {
        let params: Vec<(f64, f64)> = (0..40).map(|_| (0.0, 1.0)).collect();
        let dist = gaussian_dist(&params);
        let far_below = vec![-1e6; 40];
        let below = qqdist(&far_below, &dist, 40).unwrap();
        assert!((below - 1.0 / 3.0).abs() < 1e-3, "below: {below}");
        let far_above = vec![1e6; 40];
        let above = qqdist(&far_above, &dist, 40).unwrap();
        assert!((above - 1.0 / 3.0).abs() < 1e-3, "above: {above}");
        // Quadrature can overshoot the continuum bound by its own error.
        assert!(below <= 1.0 / 3.0 + 2e-5);
        assert!(above <= 1.0 / 3.0 + 2e-5);
    }

    #[test]
    fn qqdist_of_self_sampled_truth_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params: Vec<(f64, f64)> = (0..2000)
            .map(|k| ((k as f64 * 0.01).sin(), 0.5 + 0.1 * ((k % 7) as f64)))
            .collect();
        let dist = gaussian_dist(&params);
        let truth: Vec<f64> = (0..2000)
            .map(|k| dist.sample_at(k, &mut rng).unwrap())
            .collect();
        let v = qqdist(&truth, &dist, 2000).unwrap();
        assert!(v < 1e-3, "calibration distance {v}");
    }

    fn report(model: &str, dataset: &str, value: f64) -> MetricsReport {
        MetricsReport {
            model: model.into(),
            dataset: dataset.into(),
            mean_smape: value,
            median_smape: value,
            mean_rmse: value,
            median_rmse: value,
            nll: value,
            cnll: value,
            qqdist: value,
            qqdist_250: value,
        }
    }

    #[test]
    fn single_model_tables_are_trivial() {
        let reports = vec![report("ar", "a", 1.0), report("ar", "b", 2.0)];
        let t = rank_tables(&reports).unwrap();
        assert_eq!(t.models, vec!["ar"]);
        for qi in 0..t.metrics.len() {
            assert_eq!(t.best_count[qi][0], 2);
            assert_eq!(t.mean_rank[qi][0], 0.0);
            assert_eq!(t.mean_worst_rank[qi][0], 0.0);
        }
    }

    #[test]
    fn dominant_model_ranks_first_everywhere() {
        let reports = vec![
            report("a", "d1", 1.0),
            report("a", "d2", 1.0),
            report("b", "d1", 2.0),
            report("b", "d2", 2.0),
        ];
        let t = rank_tables(&reports).unwrap();
        for qi in 0..t.metrics.len() {
            assert_eq!(t.mean_rank[qi], vec![0.0, 1.0]);
            assert_eq!(t.mean_worst_rank[qi], vec![1.0, 0.0]);
            assert_eq!(t.best_count[qi], vec![2, 0]);
        }
    }

    #[test]
    fn ties_go_to_the_first_listed_model() {
        let reports = vec![report("x", "d", 1.0), report("y", "d", 1.0)];
        let t = rank_tables(&reports).unwrap();
        assert_eq!(t.best_count[0], vec![1, 0]);
        assert_eq!(t.mean_rank[0], vec![0.0, 1.0]);
        // From the bottom the later-listed model takes the worse slot.
        assert_eq!(t.mean_worst_rank[0], vec![1.0, 0.0]);
    }

    #[test]
    fn gp_variants_merge_by_the_better_cell() {
        let mut mc = report("gp-mc", "d", 5.0);
        mc.nll = 1.0;
        let mut gg = report("gp-gmm", "d", 3.0);
        gg.nll = 2.0;
        let reports = vec![mc, gg, report("ar", "d", 4.0)];
        let t = rank_tables(&reports).unwrap();
        assert_eq!(t.models, vec!["gp", "ar"]);
        // nll column: merged gp takes min(1, 2) = 1 and beats ar's 4.
        let nll_idx = METRIC_NAMES.iter().position(|m| *m == "nll").unwrap();
        assert_eq!(t.best_count[nll_idx], vec![1, 0]);
        // mean_smape column: merged gp takes min(5, 3) = 3 and beats 4.
        assert_eq!(t.best_count[0], vec![1, 0]);
    }

    #[test]
    fn missing_cells_are_listed() {
        let reports = vec![
            report("a", "d1", 1.0),
            report("a", "d2", 1.0),
            report("b", "d1", 2.0),
        ];
        let err = rank_tables(&reports).unwrap_err().to_string();
        assert!(err.contains("(b, d2)"), "{err}");
    }

    #[test]
    fn evaluate_forecast_fills_every_column() {
        let params: Vec<(f64, f64)> = (0..30).map(|k| (k as f64 * 0.1, 1.0)).collect();
        let dist = gaussian_dist(&params);
        let truth: Vec<f64> = (0..30).map(|k| k as f64 * 0.1 + 0.05).collect();
        let r = evaluate_forecast("ar", "toy", &truth, &dist).unwrap();
        assert!(r.mean_smape >= 0.0 && r.mean_smape <= 2.0);
        assert!(r.mean_rmse >= 0.0);
        assert!((r.mean_rmse - 0.05).abs() < 1e-9);
        // Symmetric Gaussian: mean and median forecasts coincide.
        assert!((r.mean_smape - r.median_smape).abs() < 1e-6);
        assert!(r.qqdist_250 == r.qqdist, "horizon under the cap");
        assert!(r.csv_row().starts_with("ar,toy,"));
    }
}
