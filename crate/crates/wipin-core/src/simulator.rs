//! Synthetic CSI generation from a multipath channel model with
//! body-parameterized frequency-selective attenuation.
//!
//! A channel frame is the superposition of a line-of-sight path, a handful
//! of body-reflected paths, and environmental clutter paths, each a complex
//! gain with a propagation delay:
//!
//! ```text
//! H(f_j) = a_los·e^{−j2πf_jτ_los}
//!        + Σ_body curve[j]·a_k·(1 + breathing(t))·e^{−j2πf_jτ_k}
//!        + Σ_clutter a_k·e^{−j2πf_jτ_k}
//!        + complex AWGN
//! ```
//!
//! The per-subcarrier `curve` models how a specific body absorbs Wi-Fi
//! energy selectively across frequency; it is a smooth deterministic
//! function of three interpretable parameters (fat rate, muscle rate,
//! shape scale). Body paths sit within the first 25 ns delay tap so their
//! information survives multipath mitigation, while clutter at 50–400 ns
//! lands in later taps and gets suppressed.
//!
//! [`generate_cohort`] builds labeled multi-session datasets: each subject
//! gets a fixed body profile and fixed reflection geometry, the room gets
//! one static clutter layout, and every session perturbs that layout
//! slightly (gain drift, transient reflectors, a fresh breathing phase) so
//! that recognition is non-trivial but learnable.
//!
//! All randomness flows through the seeded, cross-platform
//! [ChaCha8](crate::seeding) streams, so cohorts are bit-reproducible.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csi::{CsiFrame, CsiSeries, Dataset, SubcarrierGrid, N_SUBCARRIERS};
use crate::error::{Error, Result};
use crate::features::serde_farray;
use crate::seeding::{derive_rng, derive_seed};

/// Body reflections must stay inside the first delay tap (1/bandwidth =
/// 25 ns at 40 MHz) so that mitigation preserves them.
pub const BODY_DELAY_LIMIT_S: f64 = 25e-9;

/// Default minimum pairwise distance between cohort subjects in
/// (fat, muscle, shape) parameter space.
pub const DEFAULT_MIN_SEPARATION: f64 = 0.08;

/// Minimum pairwise distance between two subjects' around-body phase
/// vectors (radians, Euclidean over the four delay bands). A volunteer
/// cohort is deliberately diverse; without this floor, two enrollees can
/// present near-identical interference patterns and become mutual
/// false-accept twins.
const MIN_PATTERN_SEPARATION: f64 = 1.1;

/// Relative amplitude of the absorption curve's frequency ripple.
const ABSORPTION_RIPPLE: f64 = 0.15;

// ---------------------------------------------------------------------------
// Path components and body profiles
// ---------------------------------------------------------------------------

/// One propagation path: a complex gain (power decay and phase) plus a
/// time delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    /// Complex path gain `a_k`; `|a_k| ≤ 1`.
    pub gain: Complex64,
    /// Propagation delay `τ_k` in seconds; non-negative.
    pub delay_s: f64,
}

impl PathComponent {
    /// A path whose complex gain is specified **at the band center**: the
    /// response at `center_hz` is exactly `magnitude·e^{j·phase}`, and
    /// across the band it rotates as `e^{−j2π(f−center)τ}`.
    ///
    /// Parameterizing paths this way keeps interference patterns stable
    /// under small delay changes — a raw gain convention would spin the
    /// center phase a full turn per 0.2 ns of delay at 5 GHz.
    #[must_use]
    pub fn referenced_to_center(
        magnitude: f64,
        phase: f64,
        delay_s: f64,
        center_hz: f64,
    ) -> Self {
        Self {
            gain: Complex64::from_polar(magnitude, phase + TAU * center_hz * delay_s),
            delay_s,
        }
    }

    /// The path's contribution `a·e^{−j2πfτ}` at an absolute frequency.
    #[must_use]
    pub fn response_at(&self, f_hz: f64) -> Complex64 {
        self.gain * Complex64::from_polar(1.0, -TAU * f_hz * self.delay_s)
    }

    fn validate(&self, role: &str) -> Result<()> {
        if !(self.gain.re.is_finite() && self.gain.im.is_finite()) {
            return Err(Error::InvalidSpec(format!("{role} path gain is not finite")));
        }
        if self.gain.norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "{role} path gain magnitude {} exceeds 1",
                self.gain.norm()
            )));
        }
        if !(self.delay_s.is_finite() && self.delay_s >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "{role} path delay must be non-negative, got {}",
                self.delay_s
            )));
        }
        Ok(())
    }
}

/// Interpretable body parameters plus the derived per-subcarrier
/// absorption curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyProfile {
    /// Body fat fraction, in `[0.05, 0.45]`.
    pub fat_rate: f64,
    /// Muscle fraction, in `[0.2, 0.6]`.
    pub muscle_rate: f64,
    /// Dimensionless body-size factor, in `[0.8, 1.2]`.
    pub shape_scale: f64,
    /// Per-subcarrier absorption factors in `(0, 1]`, a deterministic
    /// function of the three parameters above.
    #[serde(with = "serde_farray")]
    pub absorption_curve: [f64; N_SUBCARRIERS],
}

/// The absorption-curve family: a smooth frequency-selective profile
/// `base·(1 + 0.15·sin(2π(j/30)·κ + φ))` clamped to `(0, 1]`, with
/// `base = 0.9 − 0.5·fat + 0.2·muscle`, ripple frequency `κ ∈ [1, 3]`
/// linear in the shape scale, and ripple phase `φ = π·(fat + muscle)`.
///
/// The family is deterministic, separates the three parameters, and its
/// mean is strictly decreasing in the fat rate (the hook the regression
/// study relies on): the base term contributes −0.5 per unit fat while
/// the ripple's phase shift can contribute at most ±0.15·π·|D| with
/// |D| ≤ 0.32 (the 30-point Dirichlet mean of the ripple), i.e. ±0.15.
fn absorption_curve(fat: f64, muscle: f64, shape: f64) -> [f64; N_SUBCARRIERS] {
    absorption_curve_shifted(fat, muscle, shape, 0.0)
}

fn absorption_curve_shifted(
    fat: f64,
    muscle: f64,
    shape: f64,
    phase_shift: f64,
) -> [f64; N_SUBCARRIERS] {
    let base = 0.9 - 0.5 * fat + 0.2 * muscle;
    let kappa = 1.0 + 2.0 * (shape - 0.8) / 0.4;
    let phase = PI * (fat + muscle) + phase_shift;
    std::array::from_fn(|j| {
        let ripple = (TAU * (j as f64 / N_SUBCARRIERS as f64) * kappa + phase).sin();
        (base * (1.0 + ABSORPTION_RIPPLE * ripple)).min(1.0)
    })
}

impl BodyProfile {
    /// Builds a profile, validating parameter ranges and deriving the
    /// absorption curve.
    pub fn new(fat_rate: f64, muscle_rate: f64, shape_scale: f64) -> Result<Self> {
        if !(0.05..=0.45).contains(&fat_rate) {
            return Err(Error::InvalidSpec(format!(
                "fat_rate must lie in [0.05, 0.45], got {fat_rate}"
            )));
        }
        if !(0.2..=0.6).contains(&muscle_rate) {
            return Err(Error::InvalidSpec(format!(
                "muscle_rate must lie in [0.2, 0.6], got {muscle_rate}"
            )));
        }
        if !(0.8..=1.2).contains(&shape_scale) {
            return Err(Error::InvalidSpec(format!(
                "shape_scale must lie in [0.8, 1.2], got {shape_scale}"
            )));
        }
        Ok(Self {
            fat_rate,
            muscle_rate,
            shape_scale,
            absorption_curve: absorption_curve(fat_rate, muscle_rate, shape_scale),
        })
    }

    /// Euclidean distance to another profile in (fat, muscle, shape)
    /// space.
    #[must_use]
    pub fn parameter_distance(&self, other: &Self) -> f64 {
        let df = self.fat_rate - other.fat_rate;
        let dm = self.muscle_rate - other.muscle_rate;
        let ds = self.shape_scale - other.shape_scale;
        (df * df + dm * dm + ds * ds).sqrt()
    }

    /// Checks ranges and that the stored curve matches the parameters
    /// (guards against hand-edited JSON).
    pub fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.fat_rate, self.muscle_rate, self.shape_scale)?;
        if fresh.absorption_curve != self.absorption_curve {
            return Err(Error::InvalidSpec(
                "absorption_curve does not match the body parameters".to_string(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Channel scenarios
// ---------------------------------------------------------------------------

/// A complete propagation environment for one recording session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelScenario {
    /// The line-of-sight path.
    pub los: PathComponent,
    /// Body-reflected paths; every delay must be below
    /// [`BODY_DELAY_LIMIT_S`]. Their gains are scaled per subcarrier by
    /// the body's absorption curve at synthesis time.
    pub body_paths: Vec<PathComponent>,
    /// Environmental reflections at arbitrary delays.
    pub clutter_paths: Vec<PathComponent>,
    /// Per-sample complex AWGN standard deviation (total over both
    /// quadratures).
    pub noise_sigma: f64,
    /// Standard deviation of high-frequency multiplicative amplitude
    /// jitter, independent per sample and subcarrier.
    pub jitter_sigma: f64,
    /// Relative amplitude of the slow quasi-static sway of body path
    /// gains.
    pub breathing_amp: f64,
    /// Frequency of the sway in Hz.
    pub breathing_freq_hz: f64,
    /// Phase offset of the sway at `t = 0`.
    pub breathing_phase: f64,
    /// Session-to-session advance of the absorption ripple phase; tissue
    /// state (hydration, skin temperature) drifts between recordings, so
    /// the spectral ripple never repeats exactly. Zero reproduces the
    /// profile's canonical curve.
    pub curve_phase_shift: f64,
    /// Relative per-subcarrier fine structure layered onto the
    /// absorption curve (`curve[j] *= 1 + curve_micro[j]`). Tissue
    /// layering detail gives every person a fixed frequency-fine
    /// absorption fingerprint on top of the smooth parametric curve.
    /// Empty applies none; otherwise the length must be the subcarrier
    /// count.
    pub curve_micro: Vec<f64>,
}

impl Default for ChannelScenario {
    /// A unit line-of-sight channel with nothing else.
    fn default() -> Self {
        Self {
            los: PathComponent {
                gain: Complex64::new(1.0, 0.0),
                delay_s: 0.0,
            },
            body_paths: Vec::new(),
            clutter_paths: Vec::new(),
            noise_sigma: 0.0,
            jitter_sigma: 0.0,
            breathing_amp: 0.0,
            breathing_freq_hz: 0.25,
            breathing_phase: 0.0,
            curve_phase_shift: 0.0,
            curve_micro: Vec::new(),
        }
    }
}

impl ChannelScenario {
    /// Checks path gain/delay invariants and non-negative noise levels.
    pub fn validate(&self) -> Result<()> {
        self.los.validate("line-of-sight")?;
        for p in &self.body_paths {
            p.validate("body")?;
            if p.delay_s >= BODY_DELAY_LIMIT_S {
                return Err(Error::InvalidSpec(format!(
                    "body path delay {:.3e} s falls outside the first tap (< {:.0e} s)",
                    p.delay_s, BODY_DELAY_LIMIT_S
                )));
            }
        }
        for p in &self.clutter_paths {
            p.validate("clutter")?;
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("jitter_sigma", self.jitter_sigma),
            ("breathing_amp", self.breathing_amp),
            ("breathing_freq_hz", self.breathing_freq_hz),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !self.breathing_phase.is_finite() {
            return Err(Error::InvalidSpec("breathing_phase must be finite".to_string()));
        }
        if !self.curve_micro.is_empty() {
            if self.curve_micro.len() != N_SUBCARRIERS {
                return Err(Error::InvalidSpec(format!(
                    "curve_micro must be empty or have {} entries, got {}",
                    N_SUBCARRIERS,
                    self.curve_micro.len()
                )));
            }
            for &m in &self.curve_micro {
                if !(m.is_finite() && m > -1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "curve_micro entries must be finite and above -1, got {m}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Environment presets controlling noise intensity and clutter density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    /// Noise-free anechoic conditions: no AWGN, no jitter, no clutter.
    Clean,
    /// Office conditions: mild AWGN, amplitude jitter, sparse clutter.
    Lab,
    /// Harsh conditions: stronger AWGN and three times the clutter.
    Corridor,
}

impl NoisePreset {
    /// Per-sample complex AWGN standard deviation.
    #[must_use]
    pub fn noise_sigma(self) -> f64 {
        match self {
            Self::Clean => 0.0,
            Self::Lab => 0.02,
            Self::Corridor => 0.05,
        }
    }

    /// Multiplicative amplitude jitter standard deviation.
    #[must_use]
    pub fn jitter_sigma(self) -> f64 {
        match self {
            Self::Clean => 0.0,
            Self::Lab | Self::Corridor => 0.05,
        }
    }

    /// Scales both the static clutter density and the per-session
    /// transient reflector rate (0 disables clutter entirely).
    #[must_use]
    pub fn clutter_factor(self) -> u32 {
        match self {
            Self::Clean => 0,
            Self::Lab => 1,
            Self::Corridor => 3,
        }
    }

    /// Scales the re-standing wobble of body paths between sessions (0
    /// models a marker-registered, perfectly repeatable stance).
    #[must_use]
    pub fn stance_factor(self) -> f64 {
        match self {
            Self::Clean => 0.0,
            Self::Lab | Self::Corridor => 1.0,
        }
    }
}

impl fmt::Display for NoisePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Clean => "clean",
            Self::Lab => "lab",
            Self::Corridor => "corridor",
        })
    }
}

impl FromStr for NoisePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Self::Clean),
            "lab" => Ok(Self::Lab),
            "corridor" => Ok(Self::Corridor),
            other => Err(Error::InvalidInput(format!(
                "unknown noise preset {other:?} (expected clean, lab, or corridor)"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Frame and series synthesis
// ---------------------------------------------------------------------------

/// Time-invariant parts of a scenario, precomputed per subcarrier so that
/// per-frame work is a handful of multiplications plus the noise draws.
struct FrameSynth {
    /// LOS + clutter response per subcarrier.
    static_part: [Complex64; N_SUBCARRIERS],
    /// Absorption-scaled body response per subcarrier (before breathing).
    body_part: [Complex64; N_SUBCARRIERS],
    breathing_amp: f64,
    breathing_freq_hz: f64,
    breathing_phase: f64,
    noise_sigma: f64,
    jitter_sigma: f64,
}

impl FrameSynth {
    fn new(scenario: &ChannelScenario, body: &BodyProfile, grid: &SubcarrierGrid) -> Self {
        let freqs = grid.frequencies();
        let mut static_part = [Complex64::new(0.0, 0.0); N_SUBCARRIERS];
        let mut body_part = [Complex64::new(0.0, 0.0); N_SUBCARRIERS];
        let mut curve = if scenario.curve_phase_shift == 0.0 {
            body.absorption_curve
        } else {
            absorption_curve_shifted(
                body.fat_rate,
                body.muscle_rate,
                body.shape_scale,
                scenario.curve_phase_shift,
            )
        };
        if scenario.curve_micro.len() == N_SUBCARRIERS {
            for (c, m) in curve.iter_mut().zip(&scenario.curve_micro) {
                *c *= 1.0 + m;
            }
        }
        for (j, &f) in freqs.iter().enumerate() {
            let mut acc = scenario.los.response_at(f);
            for p in &scenario.clutter_paths {
                acc += p.response_at(f);
            }
            static_part[j] = acc;
            let mut b = Complex64::new(0.0, 0.0);
            for p in &scenario.body_paths {
                b += p.response_at(f);
            }
            body_part[j] = curve[j] * b;
        }
        Self {
            static_part,
            body_part,
            breathing_amp: scenario.breathing_amp,
            breathing_freq_hz: scenario.breathing_freq_hz,
            breathing_phase: scenario.breathing_phase,
            noise_sigma: scenario.noise_sigma,
            jitter_sigma: scenario.jitter_sigma,
        }
    }

    fn frame<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> CsiFrame {
        let sway = 1.0
            + self.breathing_amp
                * (TAU * self.breathing_freq_hz * t + self.breathing_phase).sin();
        let noise_scale = self.noise_sigma / std::f64::consts::SQRT_2;
        let mut subcarriers = [Complex64::new(0.0, 0.0); N_SUBCARRIERS];
        for (j, slot) in subcarriers.iter_mut().enumerate() {
            let mut h = self.static_part[j] + sway * self.body_part[j];
            if self.jitter_sigma > 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                h *= 1.0 + self.jitter_sigma * n;
            }
            if self.noise_sigma > 0.0 {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                h += Complex64::new(noise_scale * re, noise_scale * im);
            }
            *slot = h;
        }
        CsiFrame::new(subcarriers).expect("synthesized channel values are finite")
    }
}

/// Synthesizes one CSI frame at time `t`.
///
/// The caller is responsible for scenario validity (see
/// [`ChannelScenario::validate`]); [`synthesize_series`] validates once
/// per series. Deterministic for a given generator state.
#[must_use]
pub fn synthesize_frame<R: Rng + ?Sized>(
    scenario: &ChannelScenario,
    body: &BodyProfile,
    t: f64,
    grid: &SubcarrierGrid,
    rng: &mut R,
) -> CsiFrame {
    FrameSynth::new(scenario, body, grid).frame(t, rng)
}

/// Synthesizes `⌊duration·fs⌋` frames with fresh noise per frame, driven
/// by a dedicated generator derived from `seed`. The result carries no
/// subject label; cohort generation attaches one.
pub fn synthesize_series(
    scenario: &ChannelScenario,
    body: &BodyProfile,
    duration_s: f64,
    sample_rate_hz: f64,
    grid: &SubcarrierGrid,
    seed: u64,
) -> Result<CsiSeries> {
    scenario.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidInput(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let n_frames = (duration_s * sample_rate_hz).floor() as usize;
    let synth = FrameSynth::new(scenario, body, grid);
    let mut rng = derive_rng(seed, &[]);
    let frames: Vec<CsiFrame> = (0..n_frames)
        .map(|i| synth.frame(i as f64 / sample_rate_hz, &mut rng))
        .collect();
    CsiSeries::new(frames, sample_rate_hz, grid.clone(), None, None)
}

// ---------------------------------------------------------------------------
// Cohort generation
// ---------------------------------------------------------------------------

// Fixed physical constants of the generated world. The subject stands on
// the transmitter–receiver line, so the direct ray is deeply obstructed
// (small LOS gain) and most received energy crosses the body: the primary
// body path dominates and the absorption curve becomes the leading factor
// of the amplitude profile. Its magnitude spread is kept small so that
// profile differences reflect body parameters rather than luck of the
// geometry draw; per-subject identity still gets an idiosyncratic
// component from the random path phases and excess delays. All magnitudes
// respect the |gain| ≤ 1 path invariant.
const LOS_GAIN: f64 = 0.05;
const LOS_DELAY_S: f64 = 8e-9;
const PRIMARY_MAG_MID: f64 = 0.62;
const PRIMARY_MAG_SPREAD: f64 = 0.03;
// The measurement protocol registers the subject on a floor marker, so
// the through-body path's center phase clusters around a rig constant
// with only body-to-body spread. Keeping this spread narrow keeps
// subject identity concentrated in few feature dimensions — the same
// low-dimensional structure that real body measurements exhibit — which
// is what lets a confidence threshold separate outsiders.
const PRIMARY_PHASE_CENTER: f64 = 0.9;
const PRIMARY_PHASE_SPREAD: f64 = 0.3;
// Phase anchors for the four around-body delay bands (shoulder, arm,
// hip, leg diffraction zones). Each person lands near the band anchor
// with a spread set by individual girth and limb placement.
const AROUND_PHASE_CENTERS: [f64; 4] = [0.7, 2.1, 3.8, 5.3];
const AROUND_PHASE_SPREAD: f64 = 2.2;
// Per-person frequency-fine absorption detail, expressed as bimodal
// build traits: each of a dozen smooth spectral modes carries a
// coefficient near +μ or −μ (broad/slight build, layer ordering, and
// similar two-sided anatomy), with a mild within-mode spread. Two-sided
// mode coefficients mean a pair of subjects either matches a mode
// (difference ≈ 0, the mode drops out of their separator) or differs by
// a full 2μ — and an outsider then agrees with each enrollee on only
// about half the differing modes, landing near the decision midplane
// where the confidence threshold rejects it.
const TRAIT_MODES: usize = 14;
const TRAIT_COEFF: f64 = 0.018;
const TRAIT_COEFF_SPREAD: f64 = 0.25;
const TRAIT_RESIDUE_SIGMA: f64 = 0.02;
/// Minimum pairwise Hamming distance between cohort subjects' trait
/// signs; below this two enrollees look alike at every subcarrier.
const MIN_TRAIT_DISTANCE: u32 = 6;
const STATIC_CLUTTER_RATE: f64 = 2.5;
const STATIC_CLUTTER_CAP: u32 = 5;
// Sessions occasionally pick up a weak uncontrolled reflector (a shifted
// chair, a person in the next room); kept rare and weak so the
// session-to-session energy of the backdrop stays stable — backdrop
// variance fattens the low-confidence tail of enrolled subjects and
// drags the rejection threshold down with it.
const TRANSIENT_RATE: f64 = 0.2;
const TRANSIENT_CAP: u32 = 3;
const SESSION_GAIN_JITTER: f64 = 0.03;
const SESSION_PHASE_DRIFT: f64 = 0.18;
// Re-standing scatter: the subject never assumes exactly the same pose
// twice, so body-path gains, phases, and delays wobble between sessions.
// This within-subject scatter is what keeps enrolled subjects' feature
// ranges wide enough that outsiders strain credibility instead of merely
// extrapolating them.
const STANCE_GAIN_JITTER: f64 = 0.025;
const STANCE_PHASE_JITTER: f64 = 0.12;
const STANCE_DELAY_JITTER_S: f64 = 0.25e-9;
// The weak around-body components reflect off arms and stance width,
// which nobody reproduces exactly between sessions; they get a much
// larger re-standing wobble than the marker-registered through-body
// path. This keeps each subject's session-to-session spread of the
// spectral-shape statistics comparable to the cohort-wide spread of
// those statistics, which is what an open-set threshold needs.
const POSTURE_GAIN_JITTER: f64 = 0.03;
const POSTURE_PHASE_JITTER: f64 = 0.10;
const POSTURE_DELAY_JITTER_S: f64 = 0.10e-9;
// Tissue state drifts between recordings (hydration, temperature), so a
// session sees the absorption ripple advanced by a small random phase.
// This is the only session effect that moves the pure-shape statistics
// (skewness, kurtosis, entropy of the spectral profile) the way
// different bodies move them, so it sets those statistics'
// within-subject spread.
const CURVE_PHASE_JITTER: f64 = 0.04;
const BREATHING_FREQ_HZ: f64 = 0.25;
const BREATHING_AMP: f64 = 0.02;

// Derivation-stream tags for cohort randomness.
const STREAM_PROFILES: u64 = 1;
const STREAM_BODY_PATHS: u64 = 2;
const STREAM_CLUTTER: u64 = 3;
const STREAM_SESSION: u64 = 4;
const STREAM_SERIES: u64 = 5;

fn draw_poisson_capped<R: Rng + ?Sized>(rng: &mut R, rate: f64, cap: u32) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(rate).expect("positive finite rate");
    let draw: f64 = dist.sample(rng);
    (draw as u32).min(cap)
}

/// The fixed reflection geometry of one subject: three body paths —
/// through-body transmission plus two weaker around-body components —
/// whose magnitudes, excess delays, and center phases are drawn once per
/// subject and reused in every session.
fn draw_body_paths<R: Rng + ?Sized>(rng: &mut R, center_hz: f64) -> Vec<PathComponent> {
    let primary_mag = PRIMARY_MAG_MID * (1.0 + PRIMARY_MAG_SPREAD * rng.random_range(-1.0..1.0));
    // Four around-body components with stratified excess delays: each
    // lands in a distinct region of the delay window, so each contributes
    // an independent interference pattern — body geometry spreads over
    // many weak dimensions rather than one dominant one.
    let specs = [
        (primary_mag, rng.random_range(1.55e-9..2.45e-9)),
        (
            primary_mag * rng.random_range(0.05..0.10),
            rng.random_range(3.5e-9..6.5e-9),
        ),
        (
            primary_mag * rng.random_range(0.05..0.10),
            rng.random_range(6.5e-9..9.5e-9),
        ),
        (
            primary_mag * rng.random_range(0.05..0.10),
            rng.random_range(9.5e-9..12.5e-9),
        ),
        (
            primary_mag * rng.random_range(0.05..0.10),
            rng.random_range(12.5e-9..15.5e-9),
        ),
    ];
    specs
        .into_iter()
        .enumerate()
        .map(|(i, (mag, excess))| {
            // The dominant through-body path is pinned near the rig
            // constant by the stance marker. Each around-body component
            // diffracts past a fixed part of the torso, so its phase is
            // anchored by that band's geometry; person-to-person spread
            // comes from girth and limb detail, not a full phase circle —
            // keeping the per-subcarrier spread unimodal instead of
            // piling subjects at the interference extremes.
            let phase = if i == 0 {
                PRIMARY_PHASE_CENTER
                    + PRIMARY_PHASE_SPREAD * rng.random_range(-1.0..1.0)
            } else {
                AROUND_PHASE_CENTERS[i - 1]
                    + AROUND_PHASE_SPREAD * rng.random_range(-1.0..1.0)
            };
            PathComponent::referenced_to_center(mag, phase, LOS_DELAY_S + excess, center_hz)
        })
        .collect()
}

/// Euclidean distance between two subjects' around-body phase vectors,
/// taken at band center with wrap-aware differences. The primary path
/// (index 0) is excluded — its phase is rig-pinned for everyone.
fn pattern_phase_distance(a: &[PathComponent], b: &[PathComponent], center_hz: f64) -> f64 {
    a.iter()
        .zip(b)
        .skip(1)
        .map(|(pa, pb)| {
            let da = pa.response_at(center_hz).arg() - pb.response_at(center_hz).arg();
            let wrapped = (da + PI).rem_euclid(TAU) - PI;
            wrapped * wrapped
        })
        .sum::<f64>()
        .sqrt()
}

/// Draws a subject's build-trait signs (one bit per spectral mode) and
/// expands them into the per-subcarrier absorption fine structure.
fn draw_curve_micro<R: Rng + ?Sized>(rng: &mut R) -> (u32, [f64; N_SUBCARRIERS]) {
    let mut bits = 0u32;
    let mut micro = [0.0; N_SUBCARRIERS];
    for b in 0..TRAIT_MODES {
        let sign = if rng.random_range(0.0..1.0) < 0.5 {
            bits |= 1 << b;
            1.0
        } else {
            -1.0
        };
        let n: f64 = StandardNormal.sample(rng);
        let coeff = sign * TRAIT_COEFF * (1.0 + TRAIT_COEFF_SPREAD * n);
        let mode = (b + 1) as f64;
        for (j, v) in micro.iter_mut().enumerate() {
            *v += coeff * (PI * mode * (j as f64 + 0.5) / N_SUBCARRIERS as f64).cos();
        }
    }
    for v in &mut micro {
        // A small continuous residue on top of the trait modes: tissue
        // detail too fine to fall along any build axis.
        let n: f64 = StandardNormal.sample(rng);
        *v = (*v + TRAIT_RESIDUE_SIGMA * n).clamp(-0.3, 0.3);
    }
    (bits, micro)
}

fn draw_clutter_path<R: Rng + ?Sized>(
    rng: &mut R,
    gain_range: std::ops::Range<f64>,
    center_hz: f64,
) -> PathComponent {
    let mag = rng.random_range(gain_range);
    let delay = rng.random_range(100e-9..200e-9);
    let phase = rng.random_range(0.0..TAU);
    PathComponent::referenced_to_center(mag, phase, delay, center_hz)
}

/// Draws `n` body profiles with pairwise parameter distance at least
/// `min_separation`, by rejection sampling with a bounded retry budget.
fn draw_profiles<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    min_separation: f64,
) -> Result<Vec<BodyProfile>> {
    const ATTEMPTS_PER_SUBJECT: usize = 1000;
    let mut profiles: Vec<BodyProfile> = Vec::with_capacity(n);
    for i in 0..n {
        let mut placed = false;
        for _ in 0..ATTEMPTS_PER_SUBJECT {
            // Draws cover the realistic middle of each parameter's legal
            // range rather than its extremes: a cohort of volunteers
            // clusters there, and it keeps the spectral-shape statistics'
            // cohort-wide spread within what session-to-session tissue
            // drift can plausibly pad.
            let candidate = BodyProfile::new(
                rng.random_range(0.12..0.38),
                rng.random_range(0.28..0.52),
                rng.random_range(0.85..1.15),
            )
            .expect("draw ranges match parameter ranges");
            if profiles
                .iter()
                .all(|p| p.parameter_distance(&candidate) >= min_separation)
            {
                profiles.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Cohort(format!(
                "could not place subject {} of {n} with pairwise separation {min_separation} \
                 after {ATTEMPTS_PER_SUBJECT} attempts; use a smaller separation",
                i + 1
            )));
        }
    }
    Ok(profiles)
}

/// The per-session environment: the subject's re-standing wobble on the
/// body paths, static clutter with slightly drifted gains and phases, a
/// few weak transient reflectors, and a fresh breathing phase.
fn session_scenario<R: Rng + ?Sized>(
    body_paths: &[PathComponent],
    curve_micro: &[f64],
    static_clutter: &[PathComponent],
    preset: NoisePreset,
    grid: &SubcarrierGrid,
    rng: &mut R,
) -> ChannelScenario {
    let stance = preset.stance_factor();
    // One posture draw per session, shared by every around-body path: a
    // lean or shoulder turn moves all diffraction paths together. Keeping
    // the session-to-session scatter low-rank lets a modest number of
    // enrollment sessions span it, which is what calibrates the
    // confidence threshold tightly.
    let posture_gain = 1.0 + stance * POSTURE_GAIN_JITTER * rng.random_range(-1.0..1.0);
    let posture_drift = stance * POSTURE_PHASE_JITTER * rng.random_range(-1.0..1.0);
    let posture_shift = stance * POSTURE_DELAY_JITTER_S * rng.random_range(-1.0..1.0);
    let body_paths: Vec<PathComponent> = body_paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (gain_factor, drift, shift) = if i == 0 {
                (
                    1.0 + stance * STANCE_GAIN_JITTER * rng.random_range(-1.0..1.0),
                    stance * STANCE_PHASE_JITTER * rng.random_range(-1.0..1.0),
                    stance * STANCE_DELAY_JITTER_S * rng.random_range(-1.0..1.0),
                )
            } else {
                (posture_gain, posture_drift, posture_shift)
            };
            // The stored gain embeds e^{j2πf_c·τ}; compensate the delay
            // shift there so the center phase moves only by `drift` and
            // the shift acts as a mild across-band tilt.
            let rereference = TAU * grid.center_hz * shift;
            PathComponent {
                gain: p.gain * Complex64::from_polar(gain_factor, drift + rereference),
                delay_s: (p.delay_s + shift).max(0.0),
            }
        })
        .collect();
    let mut clutter = Vec::with_capacity(static_clutter.len() + 6);
    for p in static_clutter {
        let gain_factor = 1.0 + rng.random_range(-SESSION_GAIN_JITTER..SESSION_GAIN_JITTER);
        let drift = rng.random_range(-SESSION_PHASE_DRIFT..SESSION_PHASE_DRIFT);
        clutter.push(PathComponent {
            gain: p.gain * Complex64::from_polar(gain_factor, drift),
            delay_s: p.delay_s,
        });
    }
    let factor = preset.clutter_factor();
    let n_transient = draw_poisson_capped(
        rng,
        TRANSIENT_RATE * f64::from(factor),
        TRANSIENT_CAP * factor.max(1),
    );
    for _ in 0..n_transient {
        clutter.push(draw_clutter_path(rng, 0.008..0.02, grid.center_hz));
    }
    let breathing_amp = BREATHING_AMP * (1.0 + rng.random_range(-0.10..0.10));
    let breathing_phase = rng.random_range(0.0..TAU);
    let curve_phase_shift = stance * CURVE_PHASE_JITTER * rng.random_range(-1.0..1.0);
    ChannelScenario {
        los: PathComponent::referenced_to_center(LOS_GAIN, 0.0, LOS_DELAY_S, grid.center_hz),
        body_paths,
        clutter_paths: clutter,
        noise_sigma: preset.noise_sigma(),
        jitter_sigma: preset.jitter_sigma(),
        breathing_amp,
        breathing_freq_hz: BREATHING_FREQ_HZ,
        breathing_phase,
        curve_phase_shift,
        curve_micro: curve_micro.to_vec(),
    }
}

/// Generates a labeled multi-session cohort on the default subcarrier
/// grid, with the default subject separation. Returns the dataset and the
/// ground-truth body profiles (index `i` belongs to subject id `i + 1`).
pub fn generate_cohort(
    n_subjects: usize,
    sessions_per_subject: usize,
    duration_s: f64,
    sample_rate_hz: f64,
    preset: NoisePreset,
    seed: u64,
) -> Result<(Dataset, Vec<BodyProfile>)> {
    generate_cohort_separated(
        n_subjects,
        sessions_per_subject,
        duration_s,
        sample_rate_hz,
        preset,
        seed,
        DEFAULT_MIN_SEPARATION,
    )
}

/// [`generate_cohort`] with an explicit minimum subject separation.
#[allow(clippy::too_many_arguments)]
pub fn generate_cohort_separated(
    n_subjects: usize,
    sessions_per_subject: usize,
    duration_s: f64,
    sample_rate_hz: f64,
    preset: NoisePreset,
    seed: u64,
    min_separation: f64,
) -> Result<(Dataset, Vec<BodyProfile>)> {
    if n_subjects < 2 {
        return Err(Error::InvalidInput(format!(
            "a cohort needs at least 2 subjects, got {n_subjects}"
        )));
    }
    if sessions_per_subject == 0 {
        return Err(Error::InvalidInput(
            "sessions_per_subject must be at least 1".to_string(),
        ));
    }
    if !(min_separation.is_finite() && min_separation >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "min_separation must be non-negative, got {min_separation}"
        )));
    }
    let grid = SubcarrierGrid::default();

    let profiles = draw_profiles(&mut derive_rng(seed, &[STREAM_PROFILES]), n_subjects, min_separation)?;

    let mut body_rng = derive_rng(seed, &[STREAM_BODY_PATHS]);
    let mut body_draws: Vec<(Vec<PathComponent>, u32, [f64; N_SUBCARRIERS])> =
        Vec::with_capacity(n_subjects);
    for _ in 0..n_subjects {
        // Bounded rejection sampling against pattern and trait twins,
        // mirroring the profile separation above; on budget exhaustion
        // the last draw stands so huge cohorts still generate.
        for attempt in 0..200 {
            let paths = draw_body_paths(&mut body_rng, grid.center_hz);
            let (bits, micro) = draw_curve_micro(&mut body_rng);
            let distinct = body_draws.iter().all(|(prev_paths, prev_bits, _)| {
                pattern_phase_distance(prev_paths, &paths, grid.center_hz)
                    >= MIN_PATTERN_SEPARATION
                    && (prev_bits ^ bits).count_ones() >= MIN_TRAIT_DISTANCE
            });
            if distinct || attempt == 199 {
                body_draws.push((paths, bits, micro));
                break;
            }
        }
    }

    let mut clutter_rng = derive_rng(seed, &[STREAM_CLUTTER]);
    let factor = preset.clutter_factor();
    let n_static = draw_poisson_capped(
        &mut clutter_rng,
        STATIC_CLUTTER_RATE * f64::from(factor),
        STATIC_CLUTTER_CAP * factor.max(1),
    );
    let static_clutter: Vec<PathComponent> = (0..n_static)
        .map(|_| draw_clutter_path(&mut clutter_rng, 0.04..0.10, grid.center_hz))
        .collect();

    // Per-session scenarios are drawn serially from derived streams; the
    // heavy frame synthesis then runs in parallel and is assembled in
    // (subject, session) order, so the cohort is schedule-independent.
    let mut jobs = Vec::with_capacity(n_subjects * sessions_per_subject);
    for (subject_idx, (paths, _, micro)) in body_draws.iter().enumerate() {
        let subject = subject_idx as u64 + 1;
        for session in 1..=sessions_per_subject as u64 {
            let mut rng = derive_rng(seed, &[STREAM_SESSION, subject, session]);
            let scenario =
                session_scenario(paths, micro, &static_clutter, preset, &grid, &mut rng);
            let series_seed = derive_seed(seed, &[STREAM_SERIES, subject, session]);
            jobs.push((subject_idx, session as u32, scenario, series_seed));
        }
    }
    let series: Vec<CsiSeries> = jobs
        .into_par_iter()
        .map(|(subject_idx, session, scenario, series_seed)| {
            let mut s = synthesize_series(
                &scenario,
                &profiles[subject_idx],
                duration_s,
                sample_rate_hz,
                &grid,
                series_seed,
            )?;
            s.subject_label = Some(format!("subject-{:02}", subject_idx + 1));
            s.session_index = Some(session);
            Ok(s)
        })
        .collect::<Result<_>>()?;

    let mut dataset = Dataset::from_series(series)?;
    dataset.generator = serde_json::json!({
        "kind": "synthetic-cohort",
        "preset": preset.to_string(),
        "seed": seed,
        "n_subjects": n_subjects,
        "sessions_per_subject": sessions_per_subject,
        "duration_s": duration_s,
        "sample_rate_hz": sample_rate_hz,
        "min_separation": min_separation,
    });
    Ok((dataset, profiles))
}
