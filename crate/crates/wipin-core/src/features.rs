//! The 39-dimensional recording descriptor and its min/max normalization.
//!
//! A conditioned amplitude matrix is reduced to one vector per recording:
//!
//! * **Indices 0..=29** — the temporal mean of each subcarrier column.
//!   Averaging over time collapses residual noise and leaves the
//!   frequency-selective attenuation profile a body imprints on the band.
//! * **Indices 30..=38** — nine statistics of that 30-value profile, in
//!   order: mean, standard deviation, median absolute deviation, mean
//!   absolute deviation, interquartile range, root mean square, skewness,
//!   excess kurtosis, entropy. They summarize the shape of the profile
//!   independent of which subcarrier carries which value.
//!
//! Estimator conventions (fixed here, asserted by the test suite):
//! population (n-divisor) moments; skewness `m3/σ³` and kurtosis
//! `m4/σ⁴ − 3`, both 0 when `σ = 0`; quantiles by linear interpolation at
//! rank `q·(n−1)`; entropy over 10 equal-width bins spanning the profile's
//! own [min, max] with natural logarithm and `p·ln p := 0` for empty bins.
//!
//! Features are then mapped into [−1, +1] by [`normalize`] using
//! per-coordinate training extremes: `x' = (2x − max − min)/(max − min)`.
//! Test-set values may land outside [−1, +1] and are deliberately not
//! clamped; a degenerate coordinate (`max == min`) maps to 0.

use serde::{Deserialize, Serialize};

use crate::csi::{AmplitudeMatrix, N_SUBCARRIERS};
use crate::error::{Error, Result};

/// Dimensionality of the recording descriptor: 30 subcarrier means plus 9
/// profile statistics.
pub const N_FEATURES: usize = 39;

/// Serde support for fixed-size float arrays longer than 32 (serialized as
/// a plain JSON array).
pub(crate) mod serde_farray {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        value: &[f64; N],
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(value.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        deserializer: D,
    ) -> Result<[f64; N], D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        let n = v.len();
        v.try_into()
            .map_err(|_| D::Error::custom(format!("expected {N} values, got {n}")))
    }
}

/// One recording's 39-value descriptor. See the module docs for the layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// The descriptor values; all finite.
    #[serde(with = "serde_farray")]
    pub values: [f64; N_FEATURES],
}

impl FeatureVector {
    /// The nine profile statistics (indices 30..=38).
    #[must_use]
    pub fn profile_stats(&self) -> &[f64] {
        &self.values[N_SUBCARRIERS..]
    }
}

/// Linear-interpolation quantile of an ascending-sorted slice at rank
/// `q·(n−1)`.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Shannon entropy of a 30-value profile over 10 equal-width bins spanning
/// its own [min, max], in nats.
///
/// A value lands in bin `⌊10·(v−m)/(M−m)⌋`, clamped to 9 so `v = M` joins
/// the last bin; `p_i = n_i/30`; `E = −Σ p_i·ln p_i` with empty bins
/// contributing 0. A degenerate profile (`M == m`) has entropy 0. The
/// result always lies in [0, ln 10].
#[must_use]
pub fn entropy(profile: &[f64; N_SUBCARRIERS]) -> f64 {
    let m = profile.iter().copied().fold(f64::INFINITY, f64::min);
    let big = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if big == m {
        return 0.0;
    }
    let mut counts = [0usize; 10];
    for &v in profile {
        let bin = ((10.0 * (v - m) / (big - m)) as usize).min(9);
        counts[bin] += 1;
    }
    let n = N_SUBCARRIERS as f64;
    let mut e = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / n;
            e -= p * p.ln();
        }
    }
    e
}

/// Computes the 39-value descriptor of an amplitude matrix.
///
/// Errors with [`Error::EmptyInput`] on a matrix with no rows. Every
/// statistic is invariant to the time order of rows.
pub fn extract_features(matrix: &AmplitudeMatrix) -> Result<FeatureVector> {
    if matrix.is_empty() {
        return Err(Error::EmptyInput("feature extraction on an empty matrix"));
    }
    let t = matrix.len() as f64;
    let mut profile = [0.0f64; N_SUBCARRIERS];
    for row in matrix.rows() {
        for (acc, &v) in profile.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut profile {
        *v /= t;
    }

    let n = N_SUBCARRIERS as f64;
    let mean = profile.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    let mut mean_abs_dev = 0.0;
    let mut sum_sq = 0.0;
    for &v in &profile {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        mean_abs_dev += d.abs();
        sum_sq += v * v;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mean_abs_dev /= n;
    let std = m2.sqrt();

    let mut sorted = profile;
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    let mut abs_dev: [f64; N_SUBCARRIERS] = profile;
    for v in &mut abs_dev {
        *v = (*v - median).abs();
    }
    abs_dev.sort_by(f64::total_cmp);
    let median_abs_dev = quantile_sorted(&abs_dev, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let rms = (sum_sq / n).sqrt();
    let (skewness, kurtosis) = if std > 0.0 {
        (m3 / (std * std * std), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut values = [0.0f64; N_FEATURES];
    values[..N_SUBCARRIERS].copy_from_slice(&profile);
    values[N_SUBCARRIERS..].copy_from_slice(&[
        mean,
        std,
        median_abs_dev,
        mean_abs_dev,
        iqr,
        rms,
        skewness,
        kurtosis,
        entropy(&profile),
    ]);
    Ok(FeatureVector { values })
}

/// Per-coordinate training extremes used to map features into [−1, +1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    /// Coordinate-wise minimum over the training set.
    #[serde(with = "serde_farray")]
    pub min: [f64; N_FEATURES],
    /// Coordinate-wise maximum over the training set.
    #[serde(with = "serde_farray")]
    pub max: [f64; N_FEATURES],
}

impl Normalizer {
    /// Checks `min[i] ≤ max[i]` and finiteness — useful after
    /// deserializing a model from disk.
    pub fn validate(&self) -> Result<()> {
        for i in 0..N_FEATURES {
            if !(self.min[i].is_finite() && self.max[i].is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "normalizer coordinate {i} is not finite"
                )));
            }
            if self.min[i] > self.max[i] {
                return Err(Error::InvalidInput(format!(
                    "normalizer coordinate {i} has min {} > max {}",
                    self.min[i], self.max[i]
                )));
            }
        }
        Ok(())
    }
}

/// Fits a [`Normalizer`] as the exact coordinate-wise envelope of the
/// training vectors. Errors with [`Error::EmptyInput`] on an empty slice.
pub fn fit_normalizer(training: &[FeatureVector]) -> Result<Normalizer> {
    let first = training
        .first()
        .ok_or(Error::EmptyInput("normalizer fit on no training vectors"))?;
    let mut min = first.values;
    let mut max = first.values;
    for fv in &training[1..] {
        for i in 0..N_FEATURES {
            min[i] = min[i].min(fv.values[i]);
            max[i] = max[i].max(fv.values[i]);
        }
    }
    Ok(Normalizer { min, max })
}

/// Maps a feature vector through `x' = (2x − max − min)/(max − min)`.
///
/// Training vectors land in [−1, +1] by construction; test vectors may
/// fall outside and pass through unclamped. A degenerate coordinate
/// (`max == min`) maps to 0 — a constant training feature carries no
/// information, and 0 is the neutral value.
#[must_use]
pub fn normalize(x: &FeatureVector, norm: &Normalizer) -> FeatureVector {
    let mut values = [0.0f64; N_FEATURES];
    for i in 0..N_FEATURES {
        let (lo, hi) = (norm.min[i], norm.max[i]);
        values[i] = if hi > lo {
            (2.0 * x.values[i] - hi - lo) / (hi - lo)
        } else {
            0.0
        };
    }
    FeatureVector { values }
}
