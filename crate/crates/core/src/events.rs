//! Event-timing prediction: local-maxima extraction from trajectories,
//! empirical mode decomposition for ground-truth timing extraction, kernel
//! density estimates over pooled timings, and the timing likelihood score.
//!
//! The pipeline: sample trajectories from a forecaster, record the index of
//! each detected peak, pool the indices into one sample set, fit a Gaussian
//! KDE over them, and score the ground-truth peak timings (extracted from a
//! selected intrinsic mode function of the true series) under that density.

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::baselines::TrajectoryEnsemble;
use crate::error::{Error, Result};

/// Default peak threshold in standardized units.
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.0;
/// Default minimum spacing between kept peaks, in samples.
pub const DEFAULT_MIN_DISTANCE: usize = 5;
/// Density floor applied before taking logs in the timing score.
pub const TIMING_DENSITY_FLOOR: f64 = 1e-300;

const SIFT_SD_STOP: f64 = 0.3;
const MAX_SIFT_ITERS: usize = 50;

/// Ordered indices of detected local maxima.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeakSet {
    pub indices: Vec<usize>,
}

impl PeakSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("peak indices must be strictly increasing"));
        }
        Ok(PeakSet { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Detects strict local maxima at or above `threshold`, reporting the first
/// index of a plateau, then greedily suppresses lower peaks closer than
/// `min_distance` to an already-kept higher peak.
pub fn detect_peaks(series: &[f64], threshold: f64, min_distance: usize) -> Result<PeakSet> {
    if min_distance == 0 {
        return Err(Error::invalid("min_distance must be at least 1"));
    }
    let n = series.len();
    let mut candidates: Vec<usize> = Vec::new();
    let mut t = 1;
    while t + 1 <= n.saturating_sub(1) {
        if series[t] > series[t - 1] {
            // Extend over a plateau of equal values.
            let mut e = t;
            while e + 1 < n && series[e + 1] == series[t] {
                e += 1;
            }
            if e + 1 < n && series[t] > series[e + 1] && series[t] >= threshold {
                candidates.push(t);
            }
            t = e + 1;
        } else {
            t += 1;
        }
    }
    // Height-ordered greedy suppression; ties keep the earlier index.
    let mut order = candidates.clone();
    order.sort_by(|&a, &b| {
        series[b]
            .partial_cmp(&series[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for c in order {
        if kept
            .iter()
            .all(|&k| k.abs_diff(c) >= min_distance)
        {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    PeakSet::new(kept)
}

/// Natural cubic spline through strictly increasing knots; evaluation
/// outside the knot range extends the boundary polynomial piece.
struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let m = xs.len();
        if m < 2 || ys.len() != m {
            return Err(Error::invalid("spline needs at least two knots"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("spline knots must be strictly increasing"));
        }
        let mut second = vec![0.0; m];
        if m > 2 {
            // Thomas algorithm on the natural-spline tridiagonal system.
            let k = m - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            for i in 1..k {
                let lower = xs[i + 1] - xs[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            second[k] = rhs[k - 1] / diag[k - 1];
            for i in (1..k).rev() {
                second[i] = (rhs[i - 1] - upper[i - 1] * second[i + 1]) / diag[i - 1];
            }
        }
        Ok(CubicSpline { xs, ys, second })
    }

    fn eval(&self, x: f64) -> f64 {
        let m = self.xs.len();
        let seg = match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(m - 2),
            Err(i) => i.clamp(1, m - 1) - 1,
        };
        let (x0, x1) = (self.xs[seg], self.xs[seg + 1]);
        let (y0, y1) = (self.ys[seg], self.ys[seg + 1]);
        let (m0, m1) = (self.second[seg], self.second[seg + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }
}

/// Interior strict extrema with plateau handling (first index reported).
fn extrema(series: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let n = series.len();
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let mut t = 1;
    while t + 1 <= n.saturating_sub(1) {
        let mut e = t;
        while e + 1 < n && series[e + 1] == series[t] {
            e += 1;
        }
        if e + 1 < n {
            if series[t] > series[t - 1] && series[t] > series[e + 1] {
                maxima.push(t);
            } else if series[t] < series[t - 1] && series[t] < series[e + 1] {
                minima.push(t);
            }
        }
        t = if e > t { e + 1 } else { t + 1 };
    }
    (maxima, minima)
}

fn zero_crossings(series: &[f64]) -> usize {
    series
        .windows(2)
        .filter(|w| w[0] * w[1] < 0.0)
        .count()
}

/// Envelope through the given extrema. A series endpoint that breaches the
/// envelope on its own side becomes an extra knot, and up to two boundary
/// knots are mirrored across each end to anchor the spline slopes.
fn envelope(series: &[f64], knots: &[usize], is_upper: bool) -> Result<Vec<f64>> {
    let n = series.len();
    let mut kx: Vec<f64> = knots.iter().map(|&k| k as f64).collect();
    let mut ky: Vec<f64> = knots.iter().map(|&k| series[k]).collect();
    let breaches = |v: f64, env: f64| if is_upper { v > env } else { v < env };
    if kx[0] > 0.0 && breaches(series[0], ky[0]) {
        kx.insert(0, 0.0);
        ky.insert(0, series[0]);
    }
    let end = (n - 1) as f64;
    if *kx.last().unwrap() < end && breaches(series[n - 1], *ky.last().unwrap()) {
        kx.push(end);
        ky.push(series[n - 1]);
    }
    let mut xs: Vec<f64> = Vec::with_capacity(kx.len() + 4);
    let mut ys: Vec<f64> = Vec::with_capacity(kx.len() + 4);
    for i in (0..kx.len().min(2)).rev() {
        let mirrored = -kx[i];
        if mirrored < 0.0 {
            xs.push(mirrored);
            ys.push(ky[i]);
        }
    }
    for i in 0..kx.len() {
        xs.push(kx[i]);
        ys.push(ky[i]);
    }
    for i in (kx.len().saturating_sub(2)..kx.len()).rev() {
        let mirrored = 2.0 * end - kx[i];
        if mirrored > end {
            xs.push(mirrored);
            ys.push(ky[i]);
        }
    }
    // Collisions with t = 0 or t = n-1 knots can break monotonicity.
    let mut clean_x: Vec<f64> = Vec::with_capacity(xs.len());
    let mut clean_y: Vec<f64> = Vec::with_capacity(xs.len());
    for (x, y) in xs.into_iter().zip(ys) {
        if clean_x.last().map_or(true, |&p| x > p) {
            clean_x.push(x);
            clean_y.push(y);
        }
    }
    let spline = CubicSpline::new(clean_x, clean_y)?;
    Ok((0..n).map(|t| spline.eval(t as f64)).collect())
}

fn is_monotone(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[1] >= w[0]) || series.windows(2).all(|w| w[1] <= w[0])
}

/// One sifting pass: repeatedly subtract the mean envelope until the
/// normalized squared change falls under 0.3, the extremum and
/// zero-crossing counts differ by at most one, or the iteration cap hits.
fn sift_one_imf(residual: &[f64]) -> Result<Vec<f64>> {
    let mut h = residual.to_vec();
    for _ in 0..MAX_SIFT_ITERS {
        let (maxima, minima) = extrema(&h);
        if maxima.len() < 2 || minima.len() < 2 {
            break;
        }
        let upper = envelope(&h, &maxima, true)?;
        let lower = envelope(&h, &minima, false)?;
        let mut sq_prev = 0.0;
        let mut sq_diff = 0.0;
        let mut next = Vec::with_capacity(h.len());
        for (i, &v) in h.iter().enumerate() {
            let mean = 0.5 * (upper[i] + lower[i]);
            sq_prev += v * v;
            sq_diff += mean * mean;
            next.push(v - mean);
        }
        h = next;
        if sq_prev == 0.0 || sq_diff / sq_prev < SIFT_SD_STOP {
            break;
        }
        let (maxima, minima) = extrema(&h);
        let extrema_count = maxima.len() + minima.len();
        if extrema_count.abs_diff(zero_crossings(&h)) <= 1 {
            break;
        }
    }
    Ok(h)
}

/// Intrinsic mode functions plus residual. `degenerate` flags inputs with
/// too few extrema to sift, returned unchanged as the sole mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EmdResult {
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub degenerate: bool,
}

/// Standard empirical mode decomposition with natural-cubic-spline
/// envelopes. Modes are extracted until the residual is monotone (or has
/// too few extrema to sift) or `max_imfs` is reached; modes and residual
/// sum back to the input.
pub fn emd_sift(series: &[f64], max_imfs: usize) -> Result<EmdResult> {
    if series.len() < 16 {
        return Err(Error::invalid("decomposition needs at least 16 samples"));
    }
    if max_imfs == 0 {
        return Err(Error::invalid("max_imfs must be at least 1"));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series to decompose".into()));
    }
    let (maxima, minima) = extrema(series);
    if maxima.len() + minima.len() < 4 {
        return Ok(EmdResult {
            imfs: vec![series.to_vec()],
            residual: vec![0.0; series.len()],
            degenerate: true,
        });
    }
    let mut residual = series.to_vec();
    let mut imfs = Vec::new();
    for _ in 0..max_imfs {
        let (maxima, minima) = extrema(&residual);
        if maxima.len() < 2 || minima.len() < 2 || is_monotone(&residual) {
            break;
        }
        let imf = sift_one_imf(&residual)?;
        for (r, &v) in residual.iter_mut().zip(&imf) {
            *r -= v;
        }
        imfs.push(imf);
        if is_monotone(&residual) {
            break;
        }
    }
    Ok(EmdResult {
        imfs,
        residual,
        degenerate: false,
    })
}

/// How to pick the mode carrying the event-scale oscillation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImfSelector {
    /// Explicit mode index (0 = fastest mode).
    Index(usize),
    /// Mode whose dominant discrete-Fourier period is closest to the full
    /// signal's dominant period.
    DominantPeriod,
}

/// Dominant period (in samples) from the discrete Fourier magnitude
/// spectrum, ignoring the zero-frequency bin.
fn dominant_period(series: &[f64]) -> f64 {
    let n = series.len();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut best_k = 1;
    let mut best_mag = 0.0;
    for (k, v) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let mag = v.norm_sqr();
        if mag > best_mag {
            best_mag = mag;
            best_k = k;
        }
    }
    n as f64 / best_k as f64
}

/// Ground-truth event timings: peaks of the selected intrinsic mode
/// function of the true series.
pub fn true_timings(
    ground_truth: &[f64],
    selector: ImfSelector,
    max_imfs: usize,
    threshold: f64,
    min_distance: usize,
) -> Result<PeakSet> {
    let decomposition = emd_sift(ground_truth, max_imfs)?;
    let chosen = match selector {
        ImfSelector::Index(i) => decomposition.imfs.get(i).ok_or_else(|| {
            Error::invalid(format!(
                "mode index {i} out of range for {} modes",
                decomposition.imfs.len()
            ))
        })?,
        ImfSelector::DominantPeriod => {
            let target = dominant_period(ground_truth);
            decomposition
                .imfs
                .iter()
                .min_by(|a, b| {
                    let da = (dominant_period(a) - target).abs();
                    let db = (dominant_period(b) - target).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .ok_or_else(|| Error::invalid("decomposition produced no modes"))?
        }
    };
    detect_peaks(chosen, threshold, min_distance)
}

/// Pools peak timings across all trajectories of an ensemble into one
/// sample set (as continuous values). Errors when no trajectory contains
/// any event.
pub fn trajectory_timings(
    ens: &TrajectoryEnsemble,
    threshold: f64,
    min_distance: usize,
) -> Result<Vec<f64>> {
    let per_trajectory: Vec<PeakSet> = ens
        .trajectories
        .par_iter()
        .map(|t| detect_peaks(t, threshold, min_distance))
        .collect::<Result<Vec<_>>>()?;
    let pooled: Vec<f64> = per_trajectory
        .iter()
        .flat_map(|p| p.indices.iter().map(|&i| i as f64))
        .collect();
    if pooled.is_empty() {
        return Err(Error::invalid(
            "no events detected in any sampled trajectory",
        ));
    }
    Ok(pooled)
}

/// Bandwidth rule for the timing density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Explicit(f64),
    /// 0.9 min(std, IQR/1.34) n^(-1/5), floored at one time step.
    Silverman,
}

/// Gaussian kernel density over pooled timings.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeDensity {
    samples: Vec<f64>,
    bandwidth: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

impl KdeDensity {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Mixture density (1/n) sum_i K_h(t - t_i) with a Gaussian kernel.
    pub fn pdf(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        self.samples
            .iter()
            .map(|&ti| {
                let z = (t - ti) / h;
                (-0.5 * z * z).exp()
            })
            .sum::<f64>()
            * norm
    }
}

/// Fits the Gaussian KDE over timing samples.
pub fn kde_fit(samples: &[f64], bandwidth: Bandwidth) -> Result<KdeDensity> {
    if samples.is_empty() {
        return Err(Error::invalid("density fit needs at least one sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("timing sample".into()));
    }
    let h = match bandwidth {
        Bandwidth::Explicit(h) => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
            h
        }
        Bandwidth::Silverman => {
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let mut sorted = samples.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let spread = var.sqrt().min(iqr / 1.34);
            (0.9 * spread * n.powf(-0.2)).max(1.0)
        }
    };
    Ok(KdeDensity {
        samples: samples.to_vec(),
        bandwidth: h,
    })
}

/// Timing score: negative log density summed over the true timings, with
/// each density value floored at [`TIMING_DENSITY_FLOOR`].
pub fn timing_nll(true_timings: &PeakSet, density: &KdeDensity) -> Result<f64> {
    if true_timings.is_empty() {
        return Err(Error::invalid("no true timings to score"));
    }
    Ok(true_timings
        .indices
        .iter()
        .map(|&t| -density.pdf(t as f64).max(TIMING_DENSITY_FLOOR).ln())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::TrajectoryOrigin;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Literal reference: every strict-local-max candidate above threshold,
    /// then pairwise suppression in height order.
    fn reference_peaks(series: &[f64], threshold: f64, min_distance: usize) -> Vec<usize> {
        let n = series.len();
        let mut cands = Vec::new();
        for t in 1..n.saturating_sub(1) {
            if series[t] <= series[t - 1] || series[t] < threshold {
                continue;
            }
            let mut e = t;
            while e + 1 < n && series[e + 1] == series[t] {
                e += 1;
            }
            if e + 1 < n && series[t] > series[e + 1] && (t == 1 || series[t - 1] < series[t]) {
                cands.push(t);
            }
        }
        let mut order = cands.clone();
        order.sort_by(|&a, &b| {
            series[b]
                .partial_cmp(&series[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut kept: Vec<usize> = Vec::new();
        for c in order {
            let mut ok = true;
            for &k in &kept {
                if k.abs_diff(c) < min_distance {
                    ok = false;
                }
            }
            if ok {
                kept.push(c);
            }
        }
        kept.sort_unstable();
        kept
    }

    #[test]
    fn sine_peaks_are_one_period_apart() {
        let series: Vec<f64> = (0..1000)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 100.0).sin())
            .collect();
        let peaks = detect_peaks(&series, 0.0, 5).unwrap();
        assert!(peaks.len() >= 9, "{:?}", peaks.indices);
        for w in peaks.indices.windows(2) {
            let gap = w[1] - w[0];
            assert!((99..=101).contains(&gap), "gap {gap}");
        }
    }

    #[test]
    fn monotone_series_has_no_peaks() {
        let series: Vec<f64> = (0..100).map(|t| t as f64 * 0.1).collect();
        assert!(detect_peaks(&series, f64::NEG_INFINITY, 1).unwrap().is_empty());
    }

    #[test]
    fn plateaus_report_their_first_index() {
        let series = [0.0, 1.0, 1.0, 1.0, 0.0];
        let peaks = detect_peaks(&series, 0.0, 1).unwrap();
        assert_eq!(peaks.indices, vec![1]);
    }

    #[test]
    fn detection_matches_the_exhaustive_reference_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..1000 {
            let n = rng.gen_range(8..60);
            let series: Vec<f64> = (0..n)
                .map(|_| {
                    // Discrete levels make ties and plateaus common.
                    (rng.gen_range(-4i32..5) as f64) * 0.5
                })
                .collect();
            let threshold = (rng.gen_range(-2i32..3) as f64) * 0.5;
            let min_distance = rng.gen_range(1..8);
            let got = detect_peaks(&series, threshold, min_distance).unwrap();
            let want = reference_peaks(&series, threshold, min_distance);
            assert_eq!(got.indices, want, "case {case}: {series:?}");
        }
    }

    #[test]
    fn decomposition_reconstructs_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let series: Vec<f64> = (0..400)
            .map(|t| {
                let tt = t as f64;
                (tt * 0.2).sin() + 0.4 * (tt * 0.037).cos() + 0.1 * rng.gen::<f64>()
            })
            .collect();
        let d = emd_sift(&series, 6).unwrap();
        assert!(!d.degenerate);
        assert!(d.imfs.len() >= 2);
        for (t, &x) in series.iter().enumerate() {
            let sum: f64 = d.imfs.iter().map(|imf| imf[t]).sum::<f64>() + d.residual[t];
            assert!((sum - x).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn pure_sine_is_captured_by_the_first_mode() {
        let series: Vec<f64> = (0..512)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 64.0).sin())
            .collect();
        let d = emd_sift(&series, 4).unwrap();
        let imf = &d.imfs[0];
        let dot: f64 = imf.iter().zip(&series).map(|(a, b)| a * b).sum();
        let na: f64 = imf.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = series.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.99);
        let resid_max = series
            .iter()
            .enumerate()
            .map(|(t, &x)| {
                (x - d.imfs.iter().map(|imf| imf[t]).sum::<f64>()).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(resid_max < 0.2, "residual peak {resid_max}");
    }

    #[test]
    fn slow_ramp_lands_in_the_residual() {
        let series: Vec<f64> = (0..512)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 32.0).sin() + 0.01 * t as f64)
            .collect();
        let d = emd_sift(&series, 8).unwrap();
        assert!(
            is_monotone(&d.residual),
            "residual should carry the trend"
        );
    }

    #[test]
    fn too_few_extrema_passes_the_input_through() {
        let series: Vec<f64> = (0..32).map(|t| (t as f64 - 16.0).powi(2)).collect();
        let d = emd_sift(&series, 4).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.imfs.len(), 1);
        assert_eq!(d.imfs[0], series);
        assert!(d.residual.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn true_timings_match_raw_peaks_on_clean_quasi_periodic_input() {
        let series: Vec<f64> = (0..600)
            .map(|t| {
                let tt = t as f64;
                (2.0 * std::f64::consts::PI * tt / 75.0).sin() * (1.0 + 0.1 * (tt * 0.003).sin())
            })
            .collect();
        let raw = detect_peaks(&series, 0.0, 5).unwrap();
        let timed = true_timings(&series, ImfSelector::DominantPeriod, 6, 0.0, 5).unwrap();
        assert_eq!(raw.len(), timed.len());
        for (a, b) in raw.indices.iter().zip(&timed.indices) {
            assert!(a.abs_diff(*b) <= 1, "{a} vs {b}");
        }
    }

    #[test]
    fn noisy_sine_keeps_its_peak_count() {
        // 16 cycles of period 60; events are once per cycle, so peaks
        // closer than three quarters of a period are duplicates.
        let clean: Vec<f64> = (0..960)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 60.0).sin())
            .collect();
        let min_distance = 45;
        let clean_count = true_timings(&clean, ImfSelector::DominantPeriod, 8, 0.0, min_distance)
            .unwrap()
            .len();
        assert_eq!(clean_count, 16);
        for seed in 1..=10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Signal power 0.5; noise power 0.05 gives an SNR of 10.
            let noisy: Vec<f64> = clean
                .iter()
                .map(|&x| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x + 0.05f64.sqrt() * e
                })
                .collect();
            let noisy_count =
                true_timings(&noisy, ImfSelector::DominantPeriod, 8, 0.0, min_distance)
                    .unwrap()
                    .len();
            assert_eq!(noisy_count, clean_count, "seed {seed}");
        }
    }

    #[test]
    fn out_of_range_mode_index_errors() {
        let series: Vec<f64> = (0..64)
            .map(|t| (t as f64 * 0.5).sin())
            .collect();
        assert!(true_timings(&series, ImfSelector::Index(40), 4, 0.0, 5).is_err());
    }

    #[test]
    fn pooled_timings_concatenate_per_trajectory_peaks() {
        let one: Vec<f64> = (0..100)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 20.0).sin())
            .collect();
        let ens =
            TrajectoryEnsemble::new(vec![one.clone(); 5], TrajectoryOrigin::Model).unwrap();
        let pooled = trajectory_timings(&ens, 0.0, 5).unwrap();
        let single = detect_peaks(&one, 0.0, 5).unwrap();
        assert_eq!(pooled.len(), 5 * single.len());
        let flat = trajectory_timings(
            &TrajectoryEnsemble::new(
                vec![(0..50).map(|t| t as f64).collect::<Vec<f64>>(); 2],
                TrajectoryOrigin::Model,
            )
            .unwrap(),
            0.0,
            5,
        );
        assert!(flat.is_err(), "monotone trajectories have no events");
    }

    #[test]
    fn kde_single_sample_peak_value() {
        let d = kde_fit(&[12.0], Bandwidth::Explicit(2.0)).unwrap();
        let expect = 1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((d.pdf(12.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn kde_integrates_to_one() {
        for (samples, bw) in [
            (vec![5.0], Bandwidth::Explicit(0.7)),
            (vec![1.0, 9.0, 9.5, 30.0], Bandwidth::Silverman),
            (vec![2.0, 2.0, 2.0], Bandwidth::Silverman),
        ] {
            let d = kde_fit(&samples, bw).unwrap();
            let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * d.bandwidth();
            let hi =
                samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * d.bandwidth();
            let n = 20_000;
            let step = (hi - lo) / n as f64;
            let mut integral = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                integral += w * d.pdf(lo + i as f64 * step) * step;
            }
            assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
        }
    }

    #[test]
    fn kde_is_symmetric_about_the_midpoint() {
        let d = kde_fit(&[10.0, 20.0], Bandwidth::Explicit(1.5)).unwrap();
        for delta in [0.3, 1.0, 4.2, 7.7] {
            assert!((d.pdf(15.0 - delta) - d.pdf(15.0 + delta)).abs() < 1e-12);
        }
    }

    #[test]
    fn silverman_bandwidth_is_floored_at_one_step() {
        let d = kde_fit(&[4.0, 4.0, 4.0, 4.0], Bandwidth::Silverman).unwrap();
        assert_eq!(d.bandwidth(), 1.0);
    }

    #[test]
    fn timing_score_matches_hand_values_and_adds() {
        let d = kde_fit(&[50.0], Bandwidth::Explicit(3.0)).unwrap();
        let single = timing_nll(&PeakSet::new(vec![50]).unwrap(), &d).unwrap();
        let expect = -(1.0 / (3.0 * (2.0 * std::f64::consts::PI).sqrt())).ln();
        assert!((single - expect).abs() < 1e-12);
        let double = timing_nll(&PeakSet::new(vec![50, 50 + 1]).unwrap(), &d).unwrap();
        let second = timing_nll(&PeakSet::new(vec![51]).unwrap(), &d).unwrap();
        assert!((double - (single + second)).abs() < 1e-12);
        assert!(timing_nll(&PeakSet::new(vec![]).unwrap(), &d).is_err());
    }

    #[test]
    fn concentrated_density_beats_the_uniform_baseline() {
        let truth = PeakSet::new(vec![100, 200, 300]).unwrap();
        let samples: Vec<f64> = truth
            .indices
            .iter()
            .flat_map(|&t| [t as f64 - 1.0, t as f64, t as f64 + 2.0])
            .collect();
        let d = kde_fit(&samples, Bandwidth::Silverman).unwrap();
        let nll = timing_nll(&truth, &d).unwrap();
        let horizon: f64 = 400.0;
        let uniform = truth.len() as f64 * horizon.ln();
        assert!(nll < uniform, "{nll} vs uniform {uniform}");
        // A timing far outside the support hits the density floor.
        let far = timing_nll(&PeakSet::new(vec![350_000]).unwrap(), &d).unwrap();
        assert!((far - -TIMING_DENSITY_FLOOR.ln()).abs() < 1e-6);
    }
}
