//! Signal conditioning: Butterworth low-pass denoising and delay-domain
//! multipath mitigation.
//!
//! An amplitude recording passes through two stages before feature
//! extraction:
//!
//! 1. **Noise removal** — a causal Butterworth low-pass (order 5, 10 Hz
//!    cutoff at 500 Hz sampling by default) applied independently to each
//!    subcarrier's time track. Body-induced amplitude structure is slow;
//!    thermal and quantization noise is broadband, so everything above the
//!    cutoff is attenuated by the filter's monotone roll-off.
//! 2. **Multipath mitigation** — each 30-value amplitude frame is carried
//!    into the delay domain by a 30-point inverse DFT (tap spacing
//!    1/bandwidth, i.e. 25 ns at 40 MHz), every tap from
//!    [`MitigationConfig::keep_taps`] onward is divided by a large
//!    constant, and the frame returns through the forward DFT. Paths that
//!    scatter off the measured person arrive within the first tap; later
//!    taps are dominated by room reflections, so suppressing them removes
//!    environment-specific structure while preserving the person-specific
//!    profile.
//!
//! Both stages are pure functions over immutable inputs and may be applied
//! to independent rows or series in parallel.

use std::f64::consts::PI;
use std::sync::LazyLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csi::{AmplitudeMatrix, N_SUBCARRIERS};
use crate::error::{Error, Result};

/// Design parameters of the denoising low-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ButterworthSpec {
    /// Filter order (number of poles).
    pub order: usize,
    /// −3 dB cutoff frequency in Hz.
    pub cutoff_hz: f64,
    /// Sampling rate the filter is designed for, in Hz.
    pub sample_rate_hz: f64,
}

impl Default for ButterworthSpec {
    /// Order 5, 10 Hz cutoff, 500 Hz sampling — the pipeline defaults.
    fn default() -> Self {
        Self {
            order: 5,
            cutoff_hz: 10.0,
            sample_rate_hz: 500.0,
        }
    }
}

impl ButterworthSpec {
    /// Checks the design constraints: `order ≥ 1` and
    /// `0 < cutoff < sample_rate / 2`.
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidSpec(format!(
                "filter order must be at least 1, got {}",
                self.order
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.cutoff_hz.is_finite() && self.cutoff_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "cutoff must be positive, got {}",
                self.cutoff_hz
            )));
        }
        if self.cutoff_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "cutoff {} Hz must lie below the Nyquist rate {} Hz",
                self.cutoff_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        Ok(())
    }

    /// Number of leading output samples regarded as filter warm-up:
    /// `⌈sample_rate / cutoff⌉` (50 at the defaults). A causal filter
    /// charges its state from zero, so roughly one cutoff period of output
    /// is transient. Downstream feature extraction drops these rows when
    /// the series is longer than twice the warm-up and keeps everything
    /// otherwise, so very short clips remain usable.
    #[must_use]
    pub fn warmup_len(&self) -> usize {
        (self.sample_rate_hz / self.cutoff_hz).ceil() as usize
    }
}

/// How a filter is applied along the time axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Forward-only causal filtering. The default: identification should
    /// work on a live stream, where future samples do not exist yet. Costs
    /// a group delay of a few tens of milliseconds at the default design.
    #[default]
    Causal,
    /// Forward-backward filtering (filter, reverse, filter again,
    /// reverse). Squares the magnitude response and cancels phase
    /// distortion, but needs the whole buffer; offline use only.
    ZeroPhase,
}

/// One second-order section of a realized filter cascade, in direct-form
/// coefficients with `a0` normalized to 1:
/// `y[n] = b0·x[n] + b1·x[n−1] + b2·x[n−2] − a1·y[n−1] − a2·y[n−2]`.
///
/// First-order sections are represented with `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SosSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl SosSection {
    /// Pole stability via the triangle criterion for
    /// `z² + a1·z + a2`: both roots lie strictly inside the unit circle
    /// iff `|a2| < 1` and `|a1| < 1 + a2`.
    #[must_use]
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Complex response of this section at normalized angular frequency
    /// `w` (radians per sample).
    #[must_use]
    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::new((-w).cos(), (-w).sin());
        let z2 = z1 * z1;
        let num = self.b0 + self.b1 * z1 + self.b2 * z2;
        let den = 1.0 + self.a1 * z1 + self.a2 * z2;
        num / den
    }
}

/// A realized digital filter: cascade of second-order sections plus an
/// overall gain, designed for a specific sampling rate.
///
/// Invariants established by [`design_butterworth_lowpass`]: every
/// section's poles lie strictly inside the unit circle, and the DC gain of
/// the whole cascade is 1 within 1e-9 (each section is normalized to unit
/// DC gain individually, which keeps intermediate signal levels tame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    /// The cascade, applied in order.
    pub sections: Vec<SosSection>,
    /// Overall gain applied to the input before the cascade.
    pub gain: f64,
    /// Sampling rate the coefficients were designed for, in Hz. Applying
    /// the filter to data at a different rate would silently shift the
    /// cutoff, so application checks this.
    pub design_rate_hz: f64,
}

impl FilterCoefficients {
    /// True when every section satisfies the stability criterion.
    #[must_use]
    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(SosSection::is_stable)
    }

    /// Complex frequency response at `f_hz` (relative to the design rate).
    #[must_use]
    pub fn response_at(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / self.design_rate_hz;
        self.sections
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(w))
    }

    /// Magnitude response at `f_hz`.
    #[must_use]
    pub fn magnitude_at(&self, f_hz: f64) -> f64 {
        self.response_at(f_hz).norm()
    }

    /// Runs the raw linear cascade over a signal (direct form II
    /// transposed, zero initial state). No clamping — this is the linear
    /// core; [`apply_lowpass`] adds the non-negativity clamp that
    /// amplitude data requires.
    #[must_use]
    pub fn filter_signal(&self, input: &[f64]) -> Vec<f64> {
        let mut state = vec![(0.0f64, 0.0f64); self.sections.len()];
        input
            .iter()
            .map(|&x| {
                let mut v = x * self.gain;
                for (s, st) in self.sections.iter().zip(state.iter_mut()) {
                    let y = s.b0 * v + st.0;
                    st.0 = s.b1 * v - s.a1 * y + st.1;
                    st.1 = s.b2 * v - s.a2 * y;
                    v = y;
                }
                v
            })
            .collect()
    }
}

/// Designs a Butterworth low-pass filter as a cascade of second-order
/// sections.
///
/// The analog prototype poles (maximally flat magnitude) are scaled by the
/// pre-warped cutoff `2·fs·tan(π·fc/fs)` and mapped through the bilinear
/// transform, placing all zeros at the Nyquist frequency. Conjugate pole
/// pairs become biquads; an odd order contributes one first-order section.
/// Each section is normalized to unit DC gain.
///
/// The resulting magnitude response is monotone non-increasing on
/// [0, Nyquist] and equals `1/√(1 + (tan(πf/fs)/tan(πfc/fs))^(2·order))`
/// exactly (in exact arithmetic) — the classic warped-frequency form.
pub fn design_butterworth_lowpass(spec: &ButterworthSpec) -> Result<FilterCoefficients> {
    spec.validate()?;
    let n = spec.order;
    let fs = spec.sample_rate_hz;
    let warped = 2.0 * fs * (PI * spec.cutoff_hz / fs).tan();
    let two_fs = Complex64::new(2.0 * fs, 0.0);

    let mut sections = Vec::with_capacity(n.div_ceil(2));
    // Conjugate pole pairs: prototype angles in the second quadrant.
    for m in 1..=n / 2 {
        let theta = PI * (2 * m + n - 1) as f64 / (2 * n) as f64;
        let s = warped * Complex64::new(theta.cos(), theta.sin());
        let z = (two_fs + s) / (two_fs - s);
        let a1 = -2.0 * z.re;
        let a2 = z.norm_sqr();
        // Double zero at z = −1; scale the (1, 2, 1) numerator for unit DC
        // gain. The /4 and implicit ×4 are exact in binary floating point,
        // so the section's DC gain is 1 to within an ulp or two.
        let g = (1.0 + a1 + a2) / 4.0;
        sections.push(SosSection {
            b0: g,
            b1: 2.0 * g,
            b2: g,
            a1,
            a2,
        });
    }
    // Odd order: one real prototype pole at −1.
    if n % 2 == 1 {
        let z = ((2.0 * fs - warped) / (2.0 * fs + warped)).clamp(-1.0, 1.0);
        let a1 = -z;
        let g = (1.0 + a1) / 2.0;
        sections.push(SosSection {
            b0: g,
            b1: g,
            b2: 0.0,
            a1,
            a2: 0.0,
        });
    }

    let coeffs = FilterCoefficients {
        sections,
        gain: 1.0,
        design_rate_hz: fs,
    };
    if !coeffs.is_stable() {
        return Err(Error::InvalidSpec(format!(
            "realized cascade is unstable for order {n}, cutoff {} Hz at {fs} Hz — \
             cutoff too close to the Nyquist rate",
            spec.cutoff_hz
        )));
    }
    let dc = coeffs.magnitude_at(0.0);
    if (dc - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec(format!(
            "cascade DC gain {dc} deviates from 1 beyond tolerance"
        )));
    }
    Ok(coeffs)
}

/// Filters every subcarrier column of an amplitude matrix causally and
/// clamps the output at zero from below (amplitudes are non-negative; the
/// transient of a sharp filter can undershoot).
///
/// Shape is preserved. Errors: [`Error::EmptyInput`] on an empty matrix,
/// [`Error::InvalidInput`] when the matrix sample rate does not match the
/// rate the coefficients were designed for.
pub fn apply_lowpass(
    matrix: &AmplitudeMatrix,
    coeffs: &FilterCoefficients,
) -> Result<AmplitudeMatrix> {
    apply_lowpass_with_mode(matrix, coeffs, FilterMode::Causal)
}

/// [`apply_lowpass`] with an explicit time-axis application mode.
pub fn apply_lowpass_with_mode(
    matrix: &AmplitudeMatrix,
    coeffs: &FilterCoefficients,
    mode: FilterMode,
) -> Result<AmplitudeMatrix> {
    if matrix.is_empty() {
        return Err(Error::EmptyInput("low-pass filter of an empty matrix"));
    }
    let rate_gap = (matrix.sample_rate_hz - coeffs.design_rate_hz).abs();
    if rate_gap > 1e-6 * coeffs.design_rate_hz {
        return Err(Error::InvalidInput(format!(
            "matrix sampled at {} Hz but filter designed for {} Hz",
            matrix.sample_rate_hz, coeffs.design_rate_hz
        )));
    }
    let t = matrix.len();
    let mut rows = vec![[0.0f64; N_SUBCARRIERS]; t];
    let mut column = vec![0.0f64; t];
    for j in 0..N_SUBCARRIERS {
        for (dst, row) in column.iter_mut().zip(matrix.rows()) {
            *dst = row[j];
        }
        let mut filtered = coeffs.filter_signal(&column);
        if mode == FilterMode::ZeroPhase {
            filtered.reverse();
            filtered = coeffs.filter_signal(&filtered);
            filtered.reverse();
        }
        for (row, &v) in rows.iter_mut().zip(&filtered) {
            row[j] = v.max(0.0);
        }
    }
    AmplitudeMatrix::new(rows, matrix.sample_rate_hz)
}

/// Tap-suppression parameters for multipath mitigation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigationConfig {
    /// Number of leading delay taps preserved unchanged. The default of 1
    /// keeps only the zero-delay tap: at 25 ns tap spacing, paths that
    /// interact with a person standing on the link all land there.
    /// Configurable upward for larger rooms.
    pub keep_taps: usize,
    /// Divisor applied to every suppressed tap. 1 disables mitigation.
    pub suppression_divisor: f64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            keep_taps: 1,
            suppression_divisor: 1000.0,
        }
    }
}

impl MitigationConfig {
    /// Checks `1 ≤ keep_taps ≤ 30` and `suppression_divisor ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        if !(1..=N_SUBCARRIERS).contains(&self.keep_taps) {
            return Err(Error::InvalidSpec(format!(
                "keep_taps must be in 1..={N_SUBCARRIERS}, got {}",
                self.keep_taps
            )));
        }
        if !(self.suppression_divisor.is_finite() && self.suppression_divisor >= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "suppression divisor must be at least 1, got {}",
                self.suppression_divisor
            )));
        }
        Ok(())
    }
}

/// Number of points of the delay-domain transforms — the subcarrier count.
pub const DFT_SIZE: usize = N_SUBCARRIERS;

// One full turn of the unit circle in DFT_SIZE steps, with the forward
// kernel's negative sense: TWIDDLES[k] = e^(−j·2πk/30). Both transform
// directions index this one table (the inverse conjugates), which makes the
// conjugate symmetry between them exact, not merely close.
static TWIDDLES: LazyLock<[Complex64; DFT_SIZE]> = LazyLock::new(|| {
    let mut w = [Complex64::new(0.0, 0.0); DFT_SIZE];
    for (k, slot) in w.iter_mut().enumerate() {
        let angle = -2.0 * PI * k as f64 / DFT_SIZE as f64;
        *slot = Complex64::new(angle.cos(), angle.sin());
    }
    w
});

/// Forward 30-point DFT, unscaled: `X[i] = Σ_j x[j]·e^(−j·2πij/30)`.
///
/// Direct evaluation (900 complex multiply-adds) — at this fixed small
/// size it is exact to rounding, branch-free, and fast enough that a
/// factored FFT would save nothing measurable in the pipeline.
#[must_use]
pub fn dft30(input: &[Complex64; DFT_SIZE]) -> [Complex64; DFT_SIZE] {
    let w = &*TWIDDLES;
    let mut out = [Complex64::new(0.0, 0.0); DFT_SIZE];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, x) in input.iter().enumerate() {
            acc += x * w[(i * j) % DFT_SIZE];
        }
        *slot = acc;
    }
    out
}

/// Inverse 30-point DFT with the 1/30 factor:
/// `x[j] = (1/30)·Σ_i X[i]·e^(+j·2πij/30)`, so `idft30(dft30(x)) = x`.
#[must_use]
pub fn idft30(input: &[Complex64; DFT_SIZE]) -> [Complex64; DFT_SIZE] {
    let w = &*TWIDDLES;
    let scale = 1.0 / DFT_SIZE as f64;
    let mut out = [Complex64::new(0.0, 0.0); DFT_SIZE];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, x) in input.iter().enumerate() {
            acc += x * w[(i * j) % DFT_SIZE].conj();
        }
        *slot = acc * scale;
    }
    out
}

/// Suppresses late delay taps of one amplitude frame.
///
/// The frame is carried into the delay domain by [`idft30`], taps
/// `keep_taps..30` are divided by the suppression divisor, and the result
/// returns through [`dft30`]; the output is the element-wise modulus
/// (asymmetric tap suppression leaves a tiny imaginary residue, and
/// amplitudes must stay non-negative). With `suppression_divisor = 1`
/// this is the identity on non-negative frames to machine precision.
pub fn mitigate_multipath(
    frame: &[f64; N_SUBCARRIERS],
    config: &MitigationConfig,
) -> Result<[f64; N_SUBCARRIERS]> {
    config.validate()?;
    let mut spectrum = [Complex64::new(0.0, 0.0); DFT_SIZE];
    for (slot, &v) in spectrum.iter_mut().zip(frame) {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "amplitude frame contains non-finite value {v}"
            )));
        }
        *slot = Complex64::new(v, 0.0);
    }
    let mut taps = idft30(&spectrum);
    for tap in &mut taps[config.keep_taps..] {
        *tap /= config.suppression_divisor;
    }
    let back = dft30(&taps);
    let mut out = [0.0f64; N_SUBCARRIERS];
    for (slot, z) in out.iter_mut().zip(&back) {
        *slot = z.norm();
    }
    Ok(out)
}

/// Row-wise [`mitigate_multipath`] over a whole amplitude matrix; shape
/// preserved, rows independent.
pub fn mitigate_series(
    matrix: &AmplitudeMatrix,
    config: &MitigationConfig,
) -> Result<AmplitudeMatrix> {
    config.validate()?;
    let rows = matrix
        .rows()
        .iter()
        .map(|row| mitigate_multipath(row, config))
        .collect::<Result<Vec<_>>>()?;
    AmplitudeMatrix::new(rows, matrix.sample_rate_hz)
}
