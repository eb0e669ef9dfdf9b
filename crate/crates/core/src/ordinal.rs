//! Quantization of bounded series into ordinal bins, and the piecewise-uniform
//! densities induced by categorical distributions over those bins.
//!
//! A real interval is split into `m` equal-width bins. Encoding a value gives
//! its bin index; a categorical distribution over bins is read back as a
//! density that is constant within each bin (`p_i / width`), so forecasts in
//! bin space score real-valued ground truth in nats directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor for scoring: a bin with zero estimated mass contributes
/// `ln(PROB_FLOOR / width)` instead of negative infinity.
pub const PROB_FLOOR: f64 = 1e-12;

/// Default symmetric padding applied to the observed range when fitting a
/// partition, as a fraction of that range per side.
pub const DEFAULT_PAD_FRACTION: f64 = 0.05;

/// Equal-width partition of `[lo, hi]` into `m` bins.
///
/// Bins are half-open `[lo + i*w, lo + (i+1)*w)` except the last, which is
/// closed at `hi`, so the partition covers the interval exactly. Values
/// outside `[lo, hi]` clamp to the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    lo: f64,
    hi: f64,
    m: usize,
}

impl BinPartition {
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("bin count must be positive"));
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite("partition bounds".into()));
        }
        if lo >= hi {
            return Err(Error::invalid(format!(
                "partition bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(BinPartition { lo, hi, m })
    }

    /// Fits a partition to a series: bounds are `[min, max]` widened
    /// symmetrically by `pad_fraction * range` on each side.
    ///
    /// A constant series has zero range; with `pad_fraction > 0` it is padded
    /// by `pad_fraction * max(1, |value|)` per side instead, otherwise it is
    /// an error.
    pub fn fit(series: &[f64], m: usize, pad_fraction: f64) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::invalid("cannot fit a partition to an empty series"));
        }
        if !(0.0..1.0).contains(&pad_fraction) && pad_fraction != 0.0 {
            // Large padding is allowed in principle; only reject nonsense.
            if !pad_fraction.is_finite() || pad_fraction < 0.0 {
                return Err(Error::invalid("pad_fraction must be finite and >= 0"));
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in series {
            if !x.is_finite() {
                return Err(Error::NonFinite("series passed to partition fit".into()));
            }
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let range = hi - lo;
        let pad = if range > 0.0 {
            pad_fraction * range
        } else {
            if pad_fraction == 0.0 {
                return Err(Error::invalid(
                    "constant series has zero range; needs pad_fraction > 0",
                ));
            }
            pad_fraction * lo.abs().max(1.0)
        };
        BinPartition::new(lo - pad, hi + pad, m)
    }

    pub fn bin_count(&self) -> usize {
        self.m
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.m as f64
    }

    /// Lower edge of bin `i`.
    pub fn bin_lower(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.bin_width()
    }

    /// Bin index of `x`. Out-of-range values clamp to the edge bins; `hi`
    /// itself belongs to the last bin.
    pub fn encode_one(&self, x: f64) -> Result<usize> {
        if !x.is_finite() {
            return Err(Error::NonFinite("value passed to encode".into()));
        }
        let raw = ((x - self.lo) / self.bin_width()).floor();
        let idx = if raw < 0.0 { 0 } else { raw as usize };
        Ok(idx.min(self.m - 1))
    }

    /// Midpoint of bin `i`.
    pub fn decode_one(&self, i: usize) -> Result<f64> {
        if i >= self.m {
            return Err(Error::invalid(format!(
                "bin index {i} out of range for {} bins",
                self.m
            )));
        }
        Ok(self.lo + (i as f64 + 0.5) * self.bin_width())
    }

    /// One-hot vector for bin `i`.
    pub fn one_hot(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.m {
            return Err(Error::invalid(format!(
                "bin index {i} out of range for {} bins",
                self.m
            )));
        }
        let mut v = vec![0.0; self.m];
        v[i] = 1.0;
        Ok(v)
    }
}

/// A bin-index sequence together with the partition that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalSequence {
    pub indices: Vec<usize>,
    pub partition: BinPartition,
}

/// Encodes a real series into bin indices under `partition`.
pub fn encode(series: &[f64], partition: &BinPartition) -> Result<OrdinalSequence> {
    let indices = series
        .iter()
        .map(|&x| partition.encode_one(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(OrdinalSequence {
        indices,
        partition: partition.clone(),
    })
}

/// Decodes bin indices to bin midpoints.
pub fn decode(seq: &OrdinalSequence) -> Result<Vec<f64>> {
    seq.indices
        .iter()
        .map(|&i| seq.partition.decode_one(i))
        .collect()
}

/// Probability vector over the bins of a partition. Entries are nonnegative
/// and sum to one within 1e-9 (enforced at construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDensity {
    probs: Vec<f64>,
}

impl CategoricalDensity {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::invalid(
                    "probability entries must be finite and nonnegative",
                ));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "probability vector sums to {sum}, expected 1 within 1e-9"
            )));
        }
        Ok(CategoricalDensity { probs })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("empty probability vector"));
        }
        Ok(CategoricalDensity {
            probs: vec![1.0 / m as f64; m],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Expected value under the piecewise-uniform reading: sum of bin
    /// probability times bin midpoint.
    pub fn mean(&self, partition: &BinPartition) -> Result<f64> {
        if partition.bin_count() != self.probs.len() {
            return Err(Error::ShapeMismatch(format!(
                "density over {} bins scored against partition with {} bins",
                self.probs.len(),
                partition.bin_count()
            )));
        }
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p * partition.decode_one(i)?;
        }
        Ok(acc)
    }

    /// Quantile under the piecewise-uniform reading: the cumulative mass is
    /// piecewise linear, so the level is located by linear interpolation
    /// within the bin where the CDF crosses it.
    pub fn quantile(&self, partition: &BinPartition, alpha: f64) -> Result<f64> {
        if partition.bin_count() != self.probs.len() {
            return Err(Error::ShapeMismatch(
                "density/partition bin count mismatch in quantile".into(),
            ));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid("quantile level must lie in [0, 1]"));
        }
        let (lo, hi) = partition.bounds();
        if alpha == 0.0 {
            return Ok(lo);
        }
        let w = partition.bin_width();
        let mut cum = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            let next = cum + p;
            if alpha <= next || i == self.probs.len() - 1 {
                if p <= 0.0 {
                    // No mass in this bin; the CDF is flat here, return its
                    // lower edge (the infimum of the quantile set).
                    return Ok(partition.bin_lower(i).min(hi));
                }
                let frac = ((alpha - cum) / p).clamp(0.0, 1.0);
                return Ok((partition.bin_lower(i) + frac * w).min(hi));
            }
            cum = next;
        }
        Ok(hi)
    }
}

/// Log-density of `x` under the piecewise-uniform reading of a categorical
/// distribution: `ln(max(p_i, PROB_FLOOR) / width)` with `i` the bin of `x`.
/// Out-of-range `x` clamps to the edge bins, mirroring `encode_one`.
pub fn piecewise_uniform_logpdf(
    x: f64,
    density: &CategoricalDensity,
    partition: &BinPartition,
) -> Result<f64> {
    if partition.bin_count() != density.probs.len() {
        return Err(Error::ShapeMismatch(format!(
            "density over {} bins scored against partition with {} bins",
            density.probs.len(),
            partition.bin_count()
        )));
    }
    let i = partition.encode_one(x)?;
    let p = density.probs[i].max(PROB_FLOOR);
    Ok(p.ln() - partition.bin_width().ln())
}

/// Negative log-likelihood of a truth sequence under per-step categorical
/// densities: `densities[k]` scores `truth[k]`.
pub fn sequence_nll(
    densities: &[CategoricalDensity],
    truth: &[f64],
    partition: &BinPartition,
) -> Result<f64> {
    if densities.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} densities scored against {} truth values",
            densities.len(),
            truth.len()
        )));
    }
    let mut nll = 0.0;
    for (d, &x) in densities.iter().zip(truth) {
        nll -= piecewise_uniform_logpdf(x, d, partition)?;
    }
    Ok(nll)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_pads_symmetrically() {
        let p = BinPartition::fit(&[-1.0, 1.0], 4, 0.5).unwrap();
        assert_eq!(p.bounds(), (-2.0, 2.0));
        assert_eq!(p.bin_width(), 1.0);
    }

    #[test]
    fn fit_constant_series_needs_padding() {
        assert!(BinPartition::fit(&[3.0; 10], 4, 0.0).is_err());
        let p = BinPartition::fit(&[3.0; 10], 4, 0.1).unwrap();
        let (lo, hi) = p.bounds();
        assert!(lo < 3.0 && hi > 3.0);
    }

    #[test]
    fn encode_clamps_and_closes_last_bin() {
        let p = BinPartition::new(0.0, 4.0, 4).unwrap();
        assert_eq!(p.encode_one(3.999).unwrap(), 3);
        assert_eq!(p.encode_one(4.0).unwrap(), 3);
        assert_eq!(p.encode_one(-7.0).unwrap(), 0);
        assert_eq!(p.encode_one(99.0).unwrap(), 3);
        assert!(p.encode_one(f64::NAN).is_err());
    }

    #[test]
    fn decode_returns_midpoints() {
        let p = BinPartition::new(0.0, 4.0, 4).unwrap();
        assert_eq!(p.decode_one(1).unwrap(), 1.5);
        assert!(p.decode_one(4).is_err());
    }

    #[test]
    fn logpdf_divides_mass_by_width() {
        let p = BinPartition::new(0.0, 2.0, 2).unwrap();
        let d = CategoricalDensity::new(vec![0.75, 0.25]).unwrap();
        let lp = piecewise_uniform_logpdf(0.5, &d, &p).unwrap();
        assert!((lp - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_bin_hits_floor() {
        let p = BinPartition::new(0.0, 2.0, 2).unwrap();
        let d = CategoricalDensity::new(vec![1.0, 0.0]).unwrap();
        let nll = sequence_nll(&[d], &[1.5], &p).unwrap();
        assert!((nll - -(PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn density_must_normalize() {
        assert!(CategoricalDensity::new(vec![0.5, 0.6]).is_err());
        assert!(CategoricalDensity::new(vec![-0.1, 1.1]).is_err());
        assert!(CategoricalDensity::new(vec![]).is_err());
    }

    #[test]
    fn quantile_interpolates_within_bin() {
        let p = BinPartition::new(0.0, 2.0, 2).unwrap();
        let d = CategoricalDensity::new(vec![0.5, 0.5]).unwrap();
        // CDF is linear from 0 at x=0 to 1 at x=2.
        assert!((d.quantile(&p, 0.25).unwrap() - 0.5).abs() < 1e-12);
        assert!((d.quantile(&p, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(d.quantile(&p, 0.0).unwrap(), 0.0);
        assert_eq!(d.quantile(&p, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn mean_weights_midpoints() {
        let p = BinPartition::new(0.0, 4.0, 4).unwrap();
        let d = CategoricalDensity::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.mean(&p).unwrap(), 1.5);
    }

    #[test]
    fn encode_decode_round_trip_within_half_width() {
        let p = BinPartition::new(-3.0, 3.0, 37).unwrap();
        let w = p.bin_width();
        let mut x = -3.0;
        while x <= 3.0 {
            let back = p.decode_one(p.encode_one(x).unwrap()).unwrap();
            assert!((back - x).abs() <= w / 2.0 + 1e-12);
            x += 0.01;
        }
    }
}
