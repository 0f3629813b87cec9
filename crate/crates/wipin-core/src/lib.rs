//! Person identification from Wi-Fi channel state information.
//!
//! Commodity Wi-Fi hardware reports a complex channel estimate for 30 OFDM
//! subcarrier groups on every captured frame. A human body standing on the
//! link leaves a stable, body-dependent imprint on those estimates —
//! different body compositions absorb and reflect the radio signal
//! differently — which this crate turns into an identification pipeline:
//!
//! 1. [`csi`] — data model and amplitude extraction (phase is discarded).
//! 2. [`dsp`] — low-pass denoising and delay-domain multipath mitigation,
//!    which suppresses environment reflections while keeping the
//!    body-dominated component.
//! 3. [`features`] — a 39-dimensional descriptor per recording: 30
//!    per-subcarrier temporal means plus 9 distribution statistics over
//!    that 30-point profile, then min/max normalization.
//! 4. [`classifier`] — one-vs-all linear SVMs with squared-hinge loss,
//!    softmax confidences, and a percentile-calibrated open-set rejection
//!    threshold; plus a linear support-vector regressor for body-parameter
//!    estimation studies.
//! 5. [`simulator`] — a multipath OFDM channel simulator that synthesizes
//!    labeled cohorts with controllable body parameters, clutter, and
//!    noise, for end-to-end validation without hardware.
//! 6. [`eval`] — the evaluation harness: cohort-size sweeps, open-set
//!    rejection studies, sampling-time sweeps, and latency measurements,
//!    all bit-reproducible from a master seed.
//!
//! Shared building blocks: [`error`] for the crate-wide error type and
//! [`seeding`] for deterministic cross-platform randomness.

pub mod classifier;
pub mod csi;
pub mod dsp;
pub mod error;
pub mod features;
pub mod eval;
pub mod io;
pub mod seeding;
pub mod simulator;

pub use csi::{
    amplitude, split_dataset, AmplitudeMatrix, CsiFrame, CsiSeries, Dataset, DatasetRecord,
    SubcarrierGrid, N_SUBCARRIERS,
};
pub use error::{Error, Result};
