//! Channel-state-information data model.
//!
//! A Wi-Fi receiver reports, for every captured frame, one complex channel
//! estimate per OFDM subcarrier. This crate works with the common 30-group
//! layout of a 40 MHz channel at 5 GHz: each frame is a length-30 complex
//! vector, and a recording is a time-ordered stack of such frames sampled
//! at a fixed rate (500 Hz by default upstream).
//!
//! Identification operates purely on amplitudes — phase from commodity
//! hardware is dominated by unsynchronized oscillator offsets — so the
//! first pipeline step is [`amplitude`], which takes the element-wise
//! modulus and drops phase on the floor.
//!
//! [`Dataset`] bundles labeled recordings for training and evaluation.
//! Subject identities are canonicalized to dense integer IDs `1..=N` in
//! first-appearance order; the original string labels are retained so the
//! mapping stays a bijection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derive_rng;

/// Number of subcarrier groups per CSI frame. The whole pipeline is fixed
/// to this width: transforms, feature layout, and model shapes all assume
/// exactly 30 subcarriers.
pub const N_SUBCARRIERS: usize = 30;

/// Frequency layout of the 30 reported subcarriers.
///
/// Subcarriers are spaced `bandwidth / 30` apart and centered symmetrically
/// on the carrier, so the delay-domain transform of a frame has a tap
/// resolution of `1 / bandwidth` (25 ns at 40 MHz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierGrid {
    /// Carrier center frequency in Hz.
    pub center_hz: f64,
    /// Occupied bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Absolute subcarrier frequencies in Hz, strictly ascending.
    frequencies: Vec<f64>,
}

impl SubcarrierGrid {
    /// Builds the grid for a given center frequency and bandwidth.
    pub fn new(center_hz: f64, bandwidth_hz: f64) -> Result<Self> {
        if !(center_hz.is_finite() && center_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "center frequency must be positive, got {center_hz}"
            )));
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "bandwidth must be positive, got {bandwidth_hz}"
            )));
        }
        let spacing = bandwidth_hz / N_SUBCARRIERS as f64;
        let frequencies = (0..N_SUBCARRIERS)
            .map(|j| center_hz + (j as f64 - (N_SUBCARRIERS as f64 - 1.0) / 2.0) * spacing)
            .collect();
        Ok(Self {
            center_hz,
            bandwidth_hz,
            frequencies,
        })
    }

    /// The absolute frequency of each subcarrier, ascending.
    #[must_use]
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Spacing between adjacent subcarriers in Hz.
    #[must_use]
    pub fn spacing_hz(&self) -> f64 {
        self.bandwidth_hz / N_SUBCARRIERS as f64
    }
}

impl Default for SubcarrierGrid {
    /// 5 GHz carrier, 40 MHz channel — the layout all defaults assume.
    fn default() -> Self {
        Self::new(5.0e9, 40.0e6).expect("default grid parameters are valid")
    }
}

/// One captured CSI frame: a complex channel estimate per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    /// Complex channel response, one entry per subcarrier.
    pub subcarriers: [Complex64; N_SUBCARRIERS],
}

impl CsiFrame {
    /// Wraps a raw subcarrier vector, rejecting non-finite entries.
    pub fn new(subcarriers: [Complex64; N_SUBCARRIERS]) -> Result<Self> {
        for (j, z) in subcarriers.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite CSI value at subcarrier {j}: {z}"
                )));
            }
        }
        Ok(Self { subcarriers })
    }
}

/// A time-ordered CSI recording from one capture session.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSeries {
    /// Frames in capture order.
    pub frames: Vec<CsiFrame>,
    /// Frame rate in Hz.
    pub sample_rate_hz: f64,
    /// Subcarrier frequency layout.
    pub grid: SubcarrierGrid,
    /// Optional identity tag carried through serialization ("-" when absent).
    pub subject_label: Option<String>,
    /// Optional session number within a collection campaign.
    pub session_index: Option<u32>,
}

impl CsiSeries {
    /// Assembles a series, validating the sample rate.
    pub fn new(
        frames: Vec<CsiFrame>,
        sample_rate_hz: f64,
        grid: SubcarrierGrid,
        subject_label: Option<String>,
        session_index: Option<u32>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            frames,
            sample_rate_hz,
            grid,
            subject_label,
            session_index,
        })
    }

    /// Number of frames.
    #[must_use]
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// True when the series holds no frames.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// A copy containing only the first `n` frames (all frames if `n`
    /// exceeds the length). Used by the sampling-time evaluation to emulate
    /// shorter captures.
    #[must_use]
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.frames.truncate(n);
        out
    }
}

/// Per-subcarrier amplitude track of a recording: `rows[t][j]` is the
/// modulus of subcarrier `j` in frame `t`. Entries are finite and
/// non-negative by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMatrix {
    rows: Vec<[f64; N_SUBCARRIERS]>,
    /// Frame rate inherited from the source series, in Hz.
    pub sample_rate_hz: f64,
}

impl AmplitudeMatrix {
    /// Wraps raw rows, rejecting negative or non-finite entries.
    pub fn new(rows: Vec<[f64; N_SUBCARRIERS]>, sample_rate_hz: f64) -> Result<Self> {
        for (t, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "amplitude must be finite and non-negative, got {v} at row {t}, subcarrier {j}"
                    )));
                }
            }
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            rows,
            sample_rate_hz,
        })
    }

    /// Time-major rows, `rows()[t][j]`.
    #[must_use]
    pub fn rows(&self) -> &[[f64; N_SUBCARRIERS]] {
        &self.rows
    }

    /// Number of frames (rows).
    #[must_use]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// True when the matrix has no rows.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// A copy without the first `n` rows (empty if `n` exceeds the length).
    #[must_use]
    pub fn skip_rows(&self, n: usize) -> Self {
        Self {
            rows: self.rows.iter().skip(n).copied().collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// A copy with only the first `n` rows (everything if `n` exceeds the
    /// length).
    #[must_use]
    pub fn first_rows(&self, n: usize) -> Self {
        Self {
            rows: self.rows.iter().take(n).copied().collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Element-wise modulus of a CSI series; the phase-discarding entry point
/// of the identification pipeline.
///
/// Errors with [`Error::EmptyInput`] when the series has no frames.
pub fn amplitude(series: &CsiSeries) -> Result<AmplitudeMatrix> {
    if series.is_empty() {
        return Err(Error::EmptyInput("amplitude of empty series"));
    }
    let rows = series
        .frames
        .iter()
        .map(|frame| {
            let mut row = [0.0; N_SUBCARRIERS];
            for (dst, z) in row.iter_mut().zip(frame.subcarriers.iter()) {
                *dst = z.norm();
            }
            row
        })
        .collect();
    // Moduli of finite complex numbers are finite and non-negative, so this
    // cannot fail; keep the validating constructor as the single entry.
    AmplitudeMatrix::new(rows, series.sample_rate_hz)
}

/// One labeled recording inside a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    /// Canonical subject ID, dense in `1..=n_subjects`.
    pub subject_id: u32,
    /// Session number within the subject's recordings.
    pub session_index: u32,
    /// The recording itself.
    pub series: CsiSeries,
}

/// A collection of labeled CSI recordings plus provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    /// All recordings, grouped by nothing in particular; use
    /// [`Dataset::subjects`] and friends for structured access.
    pub records: Vec<DatasetRecord>,
    /// Original subject labels; index `i` corresponds to canonical ID
    /// `i + 1`, making label ⇄ ID a bijection.
    pub labels: Vec<String>,
    /// Free-form provenance (generator parameters, source directory, …)
    /// carried into the on-disk manifest verbatim.
    pub generator: serde_json::Value,
}

impl Dataset {
    /// Canonicalizes a pile of labeled series into a dataset.
    ///
    /// Subjects receive dense IDs `1..=N` in order of first appearance of
    /// their label. Series without a subject label are rejected. Sessions
    /// without an explicit index are numbered per subject in input order,
    /// starting at 1.
    pub fn from_series(series: Vec<CsiSeries>) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        let mut records = Vec::with_capacity(series.len());
        let mut next_session: Vec<u32> = Vec::new();
        for (i, s) in series.into_iter().enumerate() {
            let label = s.subject_label.clone().ok_or_else(|| {
                Error::InvalidLabels(format!("series {i} has no subject label"))
            })?;
            let subject_id = match labels.iter().position(|l| *l == label) {
                Some(pos) => pos as u32 + 1,
                None => {
                    labels.push(label);
                    next_session.push(0);
                    labels.len() as u32
                }
            };
            let slot = &mut next_session[subject_id as usize - 1];
            *slot += 1;
            let session_index = s.session_index.unwrap_or(*slot);
            records.push(DatasetRecord {
                subject_id,
                session_index,
                series: s,
            });
        }
        Ok(Self {
            records,
            labels,
            generator: serde_json::Value::Object(Default::default()),
        })
    }

    /// Sorted list of distinct canonical subject IDs.
    #[must_use]
    pub fn subjects(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Number of distinct subjects.
    #[must_use]
    pub fn n_subjects(&self) -> usize {
        self.subjects().len()
    }

    /// Indices (into `records`) of one subject's recordings, ordered by
    /// session index.
    #[must_use]
    pub fn sessions_of(&self, subject_id: u32) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.subject_id == subject_id)
            .map(|(i, _)| i)
            .collect();
        idx.sort_by_key(|&i| self.records[i].session_index);
        idx
    }

    /// The original label for a canonical ID, when known.
    #[must_use]
    pub fn label_of(&self, subject_id: u32) -> Option<&str> {
        self.labels.get(subject_id as usize - 1).map(String::as_str)
    }
}

/// Splits a dataset into disjoint per-subject train/test partitions.
///
/// For every subject the sessions are shuffled with a generator derived
/// from `(seed, subject_id)` and the first `n_train` go to the training
/// set, the next `n_test` to the test set; any surplus sessions are left
/// out. The same `(dataset, n_train, n_test, seed)` always produces the
/// same split, independently of record order within subjects' equal
/// session indices (ordering is by session index, which must be unique per
/// subject for a meaningful split).
///
/// Errors with [`Error::InsufficientData`] naming the first subject that
/// has fewer than `n_train + n_test` sessions.
pub fn split_dataset(
    dataset: &Dataset,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    use rand::seq::SliceRandom;

    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidRange(format!(
            "split needs positive train and test counts, got {n_train}/{n_test}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for subject in dataset.subjects() {
        let mut sessions = dataset.sessions_of(subject);
        let required = n_train + n_test;
        if sessions.len() < required {
            return Err(Error::InsufficientData {
                subject,
                available: sessions.len(),
                required,
            });
        }
        let mut rng = derive_rng(seed, &[u64::from(subject)]);
        sessions.shuffle(&mut rng);
        for &i in sessions.iter().take(n_train) {
            train.push(dataset.records[i].clone());
        }
        for &i in sessions.iter().skip(n_train).take(n_test) {
            test.push(dataset.records[i].clone());
        }
    }
    let make = |records: Vec<DatasetRecord>| Dataset {
        records,
        labels: dataset.labels.clone(),
        generator: dataset.generator.clone(),
    };
    Ok((make(train), make(test)))
}
