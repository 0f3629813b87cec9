//! The end-to-end identification pipeline and the evaluation studies
//! built on top of it.
//!
//! [`run_pipeline`] turns one CSI recording into a 39-dimensional feature
//! vector: amplitude extraction → low-pass denoising (with warm-up
//! trimming) → optional identification-time windowing → multipath
//! mitigation → feature extraction. Everything downstream (training,
//! identification, the studies) consumes its output.
//!
//! The studies answer the questions an operator would ask before
//! deploying the system:
//!
//! * [`evaluate_volume_sweep`] — how does closed-set accuracy degrade as
//!   the enrolled cohort grows from 2 to N subjects?
//! * [`evaluate_rejection`] — how well does the open-set threshold accept
//!   enrolled users while rejecting strangers (TPR/TNR/balanced
//!   accuracy)?
//! * [`evaluate_sampling_time`] — how little identification-time data is
//!   enough?
//! * [`evaluate_session_split`] — does a model trained on early sessions
//!   still recognize people in later ones?
//! * [`bench_pipeline`] — wall-clock cost of one identification.
//!
//! Every study is deterministic for a `(dataset, config, seed)` triple:
//! subject draws and the train/test split come from dedicated derived
//! seed streams, and parallel evaluation collects results in a fixed
//! order. Reports serialize to CSV and to JSON;
//! [`EvaluationReport::deterministic_json`] strips the only
//! run-dependent part (wall time and machine info) so byte-equality
//! checks across runs are meaningful.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    identify, predict, scores, softmax, train_identifier, train_one_vs_all, IdentifierModel,
    SvmModel, TrainConfig,
};
use crate::csi::{amplitude, split_dataset, AmplitudeMatrix, CsiSeries, Dataset};
use crate::dsp::{
    apply_lowpass_with_mode, design_butterworth_lowpass, mitigate_series, ButterworthSpec,
    FilterMode, MitigationConfig,
};
use crate::error::{Error, Result};
use crate::features::{
    extract_features, fit_normalizer, normalize, quantile_sorted, FeatureVector, Normalizer,
};
use crate::seeding::{derive_rng, derive_seed};

// Derivation-stream tags for study randomness. The split stream is shared
// by all studies so that, e.g., the sampling-time study tests the same
// sessions the volume sweep does.
const STREAM_SPLIT: u64 = 1;
const STREAM_VOLUME: u64 = 2;
const STREAM_REJECTION: u64 = 3;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Per-subject train/test partition sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Training sessions per subject.
    pub n_train: usize,
    /// Held-out test sessions per subject.
    pub n_test: usize,
}

impl Default for SplitSpec {
    /// 20 training and 10 test sessions per subject.
    fn default() -> Self {
        Self {
            n_train: 20,
            n_test: 10,
        }
    }
}

/// Everything the pipeline and the studies need, JSON-round-trippable
/// with every field optional (missing fields take defaults).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Denoising filter order and cutoff. The spec's sample rate is
    /// advisory: the pipeline re-designs the filter at each recording's
    /// own rate, so one config serves datasets at any rate.
    pub filter: ButterworthSpec,
    /// Causal (streaming) or zero-phase (offline) filtering.
    pub filter_mode: FilterMode,
    /// Delay-domain tap suppression parameters.
    pub mitigation: MitigationConfig,
    /// SVM training parameters.
    pub train: TrainConfig,
    /// Identification-time window in seconds: only the first
    /// `⌊window·rate⌋` denoised frames of a test recording are used.
    /// `None` uses the whole recording. Training always uses whole
    /// recordings.
    pub window_s: Option<f64>,
    /// Train/test partition sizes.
    pub split: SplitSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: ButterworthSpec::default(),
            filter_mode: FilterMode::default(),
            mitigation: MitigationConfig::default(),
            train: TrainConfig::default(),
            window_s: None,
            split: SplitSpec::default(),
        }
    }
}

impl PipelineConfig {
    /// Validates every sub-config plus the window and split sizes.
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.mitigation.validate()?;
        self.train.validate()?;
        if let Some(w) = self.window_s {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidRange(format!(
                    "window must be positive and finite, got {w}"
                )));
            }
        }
        if self.split.n_train == 0 || self.split.n_test == 0 {
            return Err(Error::InvalidRange(format!(
                "split needs positive train and test counts, got {}/{}",
                self.split.n_train, self.split.n_test
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

/// Amplitude extraction, denoising, and warm-up trimming — everything
/// before windowing and mitigation.
///
/// The filter is designed at the recording's own sample rate. With causal
/// filtering the first `warmup_len()` frames carry the filter's step
/// transient, so they are dropped whenever the recording is long enough
/// to afford it (more than twice the warm-up length).
fn preprocess(series: &CsiSeries, cfg: &PipelineConfig) -> Result<AmplitudeMatrix> {
    let amp = amplitude(series)?;
    let spec = ButterworthSpec {
        sample_rate_hz: amp.sample_rate_hz,
        ..cfg.filter
    };
    let coeffs = design_butterworth_lowpass(&spec)?;
    let filtered = apply_lowpass_with_mode(&amp, &coeffs, cfg.filter_mode)?;
    let warmup = spec.warmup_len();
    Ok(if filtered.len() > 2 * warmup {
        filtered.skip_rows(warmup)
    } else {
        filtered
    })
}

/// Keeps the first `⌊window·rate⌋` rows (all of them when the window
/// exceeds the recording, or when no window is set).
fn apply_window(matrix: AmplitudeMatrix, window_s: Option<f64>) -> Result<AmplitudeMatrix> {
    let Some(w) = window_s else {
        return Ok(matrix);
    };
    let n = (w * matrix.sample_rate_hz).floor() as usize;
    if n < 1 {
        return Err(Error::InvalidRange(format!(
            "a window of {w} s holds no complete frame at {} Hz",
            matrix.sample_rate_hz
        )));
    }
    Ok(matrix.first_rows(n))
}

/// Denoises and mitigates a whole recording, with no window applied.
/// Because mitigation works row by row, a window prefix of this matrix
/// equals the windowed pipeline output exactly; the sampling-time study
/// exploits that to preprocess each recording once.
fn mitigated_full(series: &CsiSeries, cfg: &PipelineConfig) -> Result<AmplitudeMatrix> {
    mitigate_series(&preprocess(series, cfg)?, &cfg.mitigation)
}

/// Runs the full feature pipeline on one recording: amplitude → low-pass
/// (with warm-up trim) → optional window → multipath mitigation →
/// 39-dimensional feature vector.
pub fn run_pipeline(series: &CsiSeries, cfg: &PipelineConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    let pre = preprocess(series, cfg)?;
    let windowed = apply_window(pre, cfg.window_s)?;
    let mitigated = mitigate_series(&windowed, &cfg.mitigation)?;
    extract_features(&mitigated)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One summary line of a study: statistics of the per-draw metric at one
/// sweep point (a cohort size or a window length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Sweep key: the cohort size `k`, the window length in seconds, or
    /// the session boundary.
    pub key: f64,
    /// Number of draws aggregated into this row.
    pub n_draws: usize,
    /// Mean of the per-draw metric (accuracy, or balanced accuracy for
    /// the rejection study).
    pub mean: f64,
    /// Lower quartile of the per-draw metric.
    pub q1: f64,
    /// Median of the per-draw metric.
    pub median: f64,
    /// Upper quartile of the per-draw metric.
    pub q3: f64,
    /// Mean true-positive rate (rejection study only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tpr: Option<f64>,
    /// Mean true-negative rate (rejection study only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tnr: Option<f64>,
}

/// One test decision: which recording, what the model said, and how it
/// was scored. `predicted` is 0 when the instance was rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// Sweep key of the row this instance belongs to.
    pub key: f64,
    /// Draw number within the sweep point.
    pub draw: usize,
    /// Dataset-global subject ID of the recording.
    pub subject_id: u32,
    /// Session index of the recording.
    pub session_index: u32,
    /// Ground-truth subject ID (always equals `subject_id`).
    pub truth: u32,
    /// Asserted subject ID, mapped back to dataset-global IDs; 0 when
    /// rejected.
    pub predicted: u32,
    /// Softmax confidence of the top class.
    pub confidence: f64,
    /// `correct`/`wrong` for closed-set studies; `accept-correct`,
    /// `accept-wrong`, `reject-miss` (enrolled subjects) or
    /// `accept-false`, `reject-correct` (non-enrolled) for the rejection
    /// study.
    pub outcome: String,
}

/// Where and how long a study ran. Deliberately excluded from
/// [`EvaluationReport::deterministic_json`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeMeta {
    /// Total wall-clock time of the study in milliseconds.
    pub wall_ms: u64,
    /// Worker threads available to the parallel sections.
    pub threads: usize,
    /// Operating system name.
    pub os: String,
    /// CPU architecture.
    pub arch: String,
}

impl RuntimeMeta {
    fn capture(start: Instant) -> Self {
        Self {
            wall_ms: u64::try_from(start.elapsed().as_millis()).unwrap_or(u64::MAX),
            threads: rayon::current_num_threads(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

/// A complete study result: summary rows, per-instance decisions, and
/// runtime metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Which study produced this: `volume`, `rejection`, `window`, or
    /// `session-split`.
    pub mode: String,
    /// One row per sweep point, in sweep order.
    pub rows: Vec<ReportRow>,
    /// Every test decision, in (sweep point, draw, test order).
    pub instances: Vec<InstanceRecord>,
    /// Wall time and machine info for this run.
    pub runtime: RuntimeMeta,
}

impl EvaluationReport {
    /// The summary table as CSV, one line per sweep point. Column names
    /// depend on the study mode.
    #[must_use]
    pub fn summary_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        match self.mode.as_str() {
            "rejection" => {
                out.push_str("k,n_draws,mean_ba,mean_tpr,mean_tnr,q1,median,q3\n");
                for r in &self.rows {
                    let tpr = r.tpr.unwrap_or(f64::NAN);
                    let tnr = r.tnr.unwrap_or(f64::NAN);
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        r.key, r.n_draws, r.mean, tpr, tnr, r.q1, r.median, r.q3
                    )
                    .expect("write to string");
                }
            }
            mode => {
                out.push_str(match mode {
                    "volume" => "k,n_draws,mean_accuracy,q1,median,q3\n",
                    "window" => "window_s,n_draws,accuracy,q1,median,q3\n",
                    _ => "key,n_draws,mean,q1,median,q3\n",
                });
                for r in &self.rows {
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.key, r.n_draws, r.mean, r.q1, r.median, r.q3
                    )
                    .expect("write to string");
                }
            }
        }
        out
    }

    /// Every test decision as CSV.
    #[must_use]
    pub fn instances_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("key,draw,subject,session,truth,predicted,confidence,outcome\n");
        for i in &self.instances {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                i.key,
                i.draw,
                i.subject_id,
                i.session_index,
                i.truth,
                i.predicted,
                i.confidence,
                i.outcome
            )
            .expect("write to string");
        }
        out
    }

    /// Pretty JSON with the `runtime` block removed, so that two runs of
    /// the same study compare byte-for-byte.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("runtime");
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

// ---------------------------------------------------------------------------
// Shared study plumbing
// ---------------------------------------------------------------------------

/// `(subject_id, session_index, features)` for one recording.
type FeatureRow = (u32, u32, FeatureVector);

/// Runs the feature pipeline over every recording of a dataset in
/// parallel, preserving record order.
fn dataset_features(ds: &Dataset, cfg: &PipelineConfig) -> Result<Vec<FeatureRow>> {
    ds.records
        .par_iter()
        .map(|r| Ok((r.subject_id, r.session_index, run_pipeline(&r.series, cfg)?)))
        .collect()
}

fn group_by_subject(rows: Vec<FeatureRow>) -> BTreeMap<u32, Vec<FeatureVector>> {
    let mut map: BTreeMap<u32, Vec<FeatureVector>> = BTreeMap::new();
    for (subject, _session, features) in rows {
        map.entry(subject).or_default().push(features);
    }
    map
}

/// Builds the training set for an ascending subset of subject IDs
/// (class `i + 1` ⇔ `subset[i]`), fits the normalizer on it, and trains
/// the one-vs-all models.
fn fit_subset_models(
    subset: &[u32],
    train: &BTreeMap<u32, Vec<FeatureVector>>,
    cfg: &TrainConfig,
) -> Result<(Normalizer, Vec<SvmModel>)> {
    let (features, labels) = subset_training_set(subset, train)?;
    let normalizer = fit_normalizer(&features)?;
    let normalized: Vec<FeatureVector> =
        features.iter().map(|f| normalize(f, &normalizer)).collect();
    let models = train_one_vs_all(&normalized, &labels, cfg)?;
    Ok((normalizer, models))
}

fn subset_training_set(
    subset: &[u32],
    train: &BTreeMap<u32, Vec<FeatureVector>>,
) -> Result<(Vec<FeatureVector>, Vec<u32>)> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (position, subject) in subset.iter().enumerate() {
        let rows = train.get(subject).ok_or_else(|| {
            Error::InvalidInput(format!("no training sessions for subject {subject}"))
        })?;
        for f in rows {
            features.push(*f);
            labels.push(position as u32 + 1);
        }
    }
    Ok((features, labels))
}

/// Draws `k` distinct subjects by partial Fisher–Yates shuffle and
/// returns them in ascending order.
fn draw_subset<R: Rng + ?Sized>(rng: &mut R, subjects: &[u32], k: usize) -> Vec<u32> {
    let mut pool = subjects.to_vec();
    for i in 0..k {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// A draw plan over `(k, draw)` pairs with repeated subsets evaluated
/// once: `plan[(k, draw)]` indexes into `unique`.
struct DrawPlan {
    unique: Vec<Vec<u32>>,
    plan: Vec<(usize, usize, usize)>,
}

fn plan_draws(
    subjects: &[u32],
    ks: &[usize],
    n_draws: usize,
    seed: u64,
    stream: u64,
) -> DrawPlan {
    let mut unique: Vec<Vec<u32>> = Vec::new();
    let mut index_of: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut plan = Vec::with_capacity(ks.len() * n_draws);
    for &k in ks {
        for draw in 0..n_draws {
            let mut rng = derive_rng(seed, &[stream, k as u64, draw as u64]);
            let subset = draw_subset(&mut rng, subjects, k);
            let index = *index_of.entry(subset.clone()).or_insert_with(|| {
                unique.push(subset);
                unique.len() - 1
            });
            plan.push((k, draw, index));
        }
    }
    DrawPlan { unique, plan }
}

fn summary_row(key: f64, metric_per_draw: &[f64], tpr: Option<f64>, tnr: Option<f64>) -> ReportRow {
    let mut sorted = metric_per_draw.to_vec();
    sorted.sort_by(f64::total_cmp);
    ReportRow {
        key,
        n_draws: sorted.len(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        tpr,
        tnr,
    }
}

fn require_draws(n_draws: usize) -> Result<()> {
    if n_draws == 0 {
        return Err(Error::InvalidRange(
            "a study needs at least one draw per sweep point".to_string(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Volume sweep (closed set)
// ---------------------------------------------------------------------------

/// Closed-set evaluation of one subject subset: instances carry
/// placeholder key/draw, filled in at assembly.
struct ClosedEval {
    accuracy: f64,
    instances: Vec<InstanceRecord>,
}

fn evaluate_closed_subset(
    subset: &[u32],
    train: &BTreeMap<u32, Vec<FeatureVector>>,
    test: &[FeatureRow],
    cfg: &TrainConfig,
) -> Result<ClosedEval> {
    let (normalizer, models) = fit_subset_models(subset, train, cfg)?;
    let mut instances = Vec::new();
    let mut n_correct = 0usize;
    for &(subject, session, features) in test {
        if subset.binary_search(&subject).is_err() {
            continue;
        }
        let x = normalize(&features, &normalizer);
        let s = scores(&models, &x);
        let class = predict(&s);
        let confidence = softmax(&s)[(class - 1) as usize];
        let predicted = subset[(class - 1) as usize];
        let correct = predicted == subject;
        n_correct += usize::from(correct);
        instances.push(InstanceRecord {
            key: 0.0,
            draw: 0,
            subject_id: subject,
            session_index: session,
            truth: subject,
            predicted,
            confidence,
            outcome: if correct { "correct" } else { "wrong" }.to_string(),
        });
    }
    if instances.is_empty() {
        return Err(Error::InvalidInput(
            "no test sessions for the drawn subject subset".to_string(),
        ));
    }
    Ok(ClosedEval {
        accuracy: n_correct as f64 / instances.len() as f64,
        instances,
    })
}

/// Sweeps closed-set identification accuracy over enrolled-cohort sizes.
///
/// The dataset is split once per study (stream-shared with the other
/// studies); for every `k` in `ks`, `n_draws` random k-subsets of the
/// subjects are enrolled, a fresh model is trained per subset on its
/// training sessions, and accuracy is measured on the subset's test
/// sessions. Repeated subsets (inevitable at `k = N`) are evaluated once
/// and reused.
///
/// Errors with [`Error::InvalidRange`] when `ks` is empty, any `k` falls
/// outside `[2, N]`, or `n_draws` is zero.
pub fn evaluate_volume_sweep(
    dataset: &Dataset,
    ks: &[usize],
    n_draws: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EvaluationReport> {
    let start = Instant::now();
    cfg.validate()?;
    require_draws(n_draws)?;
    let subjects = dataset.subjects();
    if ks.is_empty() {
        return Err(Error::InvalidRange(
            "at least one cohort size is required".to_string(),
        ));
    }
    for &k in ks {
        if k < 2 || k > subjects.len() {
            return Err(Error::InvalidRange(format!(
                "cohort size {k} outside [2, {}]",
                subjects.len()
            )));
        }
    }

    let (train_ds, test_ds) = split_dataset(
        dataset,
        cfg.split.n_train,
        cfg.split.n_test,
        derive_seed(seed, &[STREAM_SPLIT]),
    )?;
    let train_cfg = PipelineConfig {
        window_s: None,
        ..*cfg
    };
    let train_features = group_by_subject(dataset_features(&train_ds, &train_cfg)?);
    let test_features = dataset_features(&test_ds, cfg)?;

    let DrawPlan { unique, plan } = plan_draws(&subjects, ks, n_draws, seed, STREAM_VOLUME);
    let evals: Vec<ClosedEval> = unique
        .par_iter()
        .map(|subset| evaluate_closed_subset(subset, &train_features, &test_features, &cfg.train))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(ks.len());
    let mut instances = Vec::new();
    for &k in ks {
        let mut accuracies = Vec::with_capacity(n_draws);
        for &(_, draw, index) in plan.iter().filter(|(pk, _, _)| *pk == k) {
            let eval = &evals[index];
            accuracies.push(eval.accuracy);
            instances.extend(eval.instances.iter().map(|inst| InstanceRecord {
                key: k as f64,
                draw,
                ..inst.clone()
            }));
        }
        rows.push(summary_row(k as f64, &accuracies, None, None));
    }
    Ok(EvaluationReport {
        mode: "volume".to_string(),
        rows,
        instances,
        runtime: RuntimeMeta::capture(start),
    })
}

// ---------------------------------------------------------------------------
// Open-set rejection
// ---------------------------------------------------------------------------

struct OpenEval {
    tpr: f64,
    tnr: f64,
    balanced_accuracy: f64,
    instances: Vec<InstanceRecord>,
}

/// Scores an identifier against enrolled (in-subset) and non-enrolled
/// test recordings: TPR counts enrolled recordings accepted *as the
/// right person*, TNR counts non-enrolled recordings rejected.
fn score_open_set(model: &IdentifierModel, subset: &[u32], test: &[FeatureRow]) -> OpenEval {
    let mut instances = Vec::new();
    let (mut legal, mut accept_correct) = (0usize, 0usize);
    let (mut attackers, mut reject_correct) = (0usize, 0usize);
    for &(subject, session, features) in test {
        let (class, confidence) = model.classify(&features);
        let accepted = confidence >= model.threshold;
        let asserted = subset[(class - 1) as usize];
        let enrolled = subset.binary_search(&subject).is_ok();
        let (predicted, outcome) = if enrolled {
            legal += 1;
            if !accepted {
                (0, "reject-miss")
            } else if asserted == subject {
                accept_correct += 1;
                (asserted, "accept-correct")
            } else {
                (asserted, "accept-wrong")
            }
        } else {
            attackers += 1;
            if accepted {
                (asserted, "accept-false")
            } else {
                reject_correct += 1;
                (0, "reject-correct")
            }
        };
        instances.push(InstanceRecord {
            key: 0.0,
            draw: 0,
            subject_id: subject,
            session_index: session,
            truth: subject,
            predicted,
            confidence,
            outcome: outcome.to_string(),
        });
    }
    let tpr = accept_correct as f64 / legal as f64;
    let tnr = reject_correct as f64 / attackers as f64;
    OpenEval {
        tpr,
        tnr,
        balanced_accuracy: 0.5 * tpr + 0.5 * tnr,
        instances,
    }
}

fn evaluate_open_subset(
    subset: &[u32],
    train: &BTreeMap<u32, Vec<FeatureVector>>,
    test: &[FeatureRow],
    cfg: &TrainConfig,
) -> Result<OpenEval> {
    let (features, labels) = subset_training_set(subset, train)?;
    let model = train_identifier(&features, &labels, cfg)?;
    Ok(score_open_set(&model, subset, test))
}

/// Sweeps open-set rejection quality over enrolled-cohort sizes.
///
/// For every `k` in `ks`, `n_draws` random k-subsets are enrolled (with
/// confidence threshold learned from training data); the test sessions
/// of enrolled subjects must be accepted as the right person (TPR) and
/// the test sessions of all other subjects must be rejected (TNR). Each
/// row reports the balanced accuracy `(TPR + TNR)/2` distribution over
/// draws plus mean TPR/TNR.
///
/// `k` must leave at least one non-enrolled subject, i.e. lie in
/// `[2, N−1]`.
pub fn evaluate_rejection(
    dataset: &Dataset,
    ks: &[usize],
    n_draws: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EvaluationReport> {
    let start = Instant::now();
    cfg.validate()?;
    require_draws(n_draws)?;
    let subjects = dataset.subjects();
    if ks.is_empty() {
        return Err(Error::InvalidRange(
            "at least one cohort size is required".to_string(),
        ));
    }
    for &k in ks {
        if k < 2 || k + 1 > subjects.len() {
            return Err(Error::InvalidRange(format!(
                "rejection needs enrolled cohorts in [2, {}] so at least one \
                 subject stays non-enrolled, got {k}",
                subjects.len().saturating_sub(1)
            )));
        }
    }

    let (train_ds, test_ds) = split_dataset(
        dataset,
        cfg.split.n_train,
        cfg.split.n_test,
        derive_seed(seed, &[STREAM_SPLIT]),
    )?;
    let train_cfg = PipelineConfig {
        window_s: None,
        ..*cfg
    };
    let train_features = group_by_subject(dataset_features(&train_ds, &train_cfg)?);
    let test_features = dataset_features(&test_ds, cfg)?;

    let DrawPlan { unique, plan } = plan_draws(&subjects, ks, n_draws, seed, STREAM_REJECTION);
    let evals: Vec<OpenEval> = unique
        .par_iter()
        .map(|subset| evaluate_open_subset(subset, &train_features, &test_features, &cfg.train))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(ks.len());
    let mut instances = Vec::new();
    for &k in ks {
        let mut ba = Vec::with_capacity(n_draws);
        let mut tpr_sum = 0.0;
        let mut tnr_sum = 0.0;
        for &(_, draw, index) in plan.iter().filter(|(pk, _, _)| *pk == k) {
            let eval = &evals[index];
            ba.push(eval.balanced_accuracy);
            tpr_sum += eval.tpr;
            tnr_sum += eval.tnr;
            instances.extend(eval.instances.iter().map(|inst| InstanceRecord {
                key: k as f64,
                draw,
                ..inst.clone()
            }));
        }
        rows.push(summary_row(
            k as f64,
            &ba,
            Some(tpr_sum / ba.len() as f64),
            Some(tnr_sum / ba.len() as f64),
        ));
    }
    Ok(EvaluationReport {
        mode: "rejection".to_string(),
        rows,
        instances,
        runtime: RuntimeMeta::capture(start),
    })
}

// ---------------------------------------------------------------------------
// Sampling-time sweep
// ---------------------------------------------------------------------------

/// Sweeps closed-set accuracy over identification-time window lengths.
///
/// One model is trained on all subjects' full training sessions (same
/// split stream as the other studies); each test session is denoised and
/// mitigated once, and every window in `windows` keeps only its first
/// `⌊window·rate⌋` frames before feature extraction. With a window that
/// covers whole recordings this study reproduces the volume sweep at
/// `k = N` exactly.
///
/// Errors with [`Error::InvalidRange`] when `windows` is empty, a window
/// is non-positive, or a window holds less than one frame.
pub fn evaluate_sampling_time(
    dataset: &Dataset,
    windows: &[f64],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EvaluationReport> {
    let start = Instant::now();
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidRange(
            "at least one window length is required".to_string(),
        ));
    }
    for &w in windows {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidRange(format!(
                "window lengths must be positive and finite, got {w}"
            )));
        }
    }

    let (train_ds, test_ds) = split_dataset(
        dataset,
        cfg.split.n_train,
        cfg.split.n_test,
        derive_seed(seed, &[STREAM_SPLIT]),
    )?;
    let train_cfg = PipelineConfig {
        window_s: None,
        ..*cfg
    };
    let train_features = group_by_subject(dataset_features(&train_ds, &train_cfg)?);
    let subjects: Vec<u32> = train_features.keys().copied().collect();
    let (normalizer, models) = fit_subset_models(&subjects, &train_features, &cfg.train)?;

    let test_matrices: Vec<(u32, u32, AmplitudeMatrix)> = test_ds
        .records
        .par_iter()
        .map(|r| Ok((r.subject_id, r.session_index, mitigated_full(&r.series, cfg)?)))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(windows.len());
    let mut instances = Vec::new();
    for &w in windows {
        let mut n_correct = 0usize;
        let mut n_total = 0usize;
        for (subject, session, matrix) in &test_matrices {
            let frames = (w * matrix.sample_rate_hz).floor() as usize;
            if frames < 1 {
                return Err(Error::InvalidRange(format!(
                    "a window of {w} s holds no complete frame at {} Hz",
                    matrix.sample_rate_hz
                )));
            }
            let features = extract_features(&matrix.first_rows(frames))?;
            let x = normalize(&features, &normalizer);
            let s = scores(&models, &x);
            let class = predict(&s);
            let confidence = softmax(&s)[(class - 1) as usize];
            let predicted = subjects[(class - 1) as usize];
            let correct = predicted == *subject;
            n_correct += usize::from(correct);
            n_total += 1;
            instances.push(InstanceRecord {
                key: w,
                draw: 0,
                subject_id: *subject,
                session_index: *session,
                truth: *subject,
                predicted,
                confidence,
                outcome: if correct { "correct" } else { "wrong" }.to_string(),
            });
        }
        let accuracy = n_correct as f64 / n_total as f64;
        rows.push(ReportRow {
            key: w,
            n_draws: 1,
            mean: accuracy,
            q1: accuracy,
            median: accuracy,
            q3: accuracy,
            tpr: None,
            tnr: None,
        });
    }
    Ok(EvaluationReport {
        mode: "window".to_string(),
        rows,
        instances,
        runtime: RuntimeMeta::capture(start),
    })
}

// ---------------------------------------------------------------------------
// Session-boundary split
// ---------------------------------------------------------------------------

/// Trains on every subject's sessions up to and including `boundary` and
/// tests on all later sessions — a temporal hold-out that checks whether
/// models survive session-to-session environment drift.
///
/// Every subject must have at least one session on each side. The report
/// has a single row keyed by the boundary.
pub fn evaluate_session_split(
    dataset: &Dataset,
    boundary: u32,
    cfg: &PipelineConfig,
) -> Result<EvaluationReport> {
    let start = Instant::now();
    cfg.validate()?;
    let mut train_records = Vec::new();
    let mut test_records = Vec::new();
    for r in &dataset.records {
        if r.session_index <= boundary {
            train_records.push(r.clone());
        } else {
            test_records.push(r.clone());
        }
    }
    let subset = Dataset {
        records: train_records,
        labels: dataset.labels.clone(),
        generator: dataset.generator.clone(),
    };
    let test_set = Dataset {
        records: test_records,
        labels: dataset.labels.clone(),
        generator: dataset.generator.clone(),
    };
    let all = dataset.subjects();
    if subset.subjects() != all || test_set.subjects() != all {
        return Err(Error::InvalidRange(format!(
            "session boundary {boundary} does not leave every subject with \
             sessions on both sides"
        )));
    }

    let train_cfg = PipelineConfig {
        window_s: None,
        ..*cfg
    };
    let train_features = group_by_subject(dataset_features(&subset, &train_cfg)?);
    let test_features = dataset_features(&test_set, cfg)?;
    let eval = evaluate_closed_subset(&all, &train_features, &test_features, &cfg.train)?;
    let accuracy = eval.accuracy;
    let instances: Vec<InstanceRecord> = eval
        .instances
        .into_iter()
        .map(|inst| InstanceRecord {
            key: f64::from(boundary),
            ..inst
        })
        .collect();
    Ok(EvaluationReport {
        mode: "session-split".to_string(),
        rows: vec![ReportRow {
            key: f64::from(boundary),
            n_draws: 1,
            mean: accuracy,
            q1: accuracy,
            median: accuracy,
            q3: accuracy,
            tpr: None,
            tnr: None,
        }],
        instances,
        runtime: RuntimeMeta::capture(start),
    })
}

// ---------------------------------------------------------------------------
// Pipeline benchmark
// ---------------------------------------------------------------------------

/// Median wall-clock cost of the identification stages, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    /// Amplitude extraction, denoising, windowing, and mitigation.
    pub preprocess_ms: f64,
    /// Feature extraction.
    pub features_ms: f64,
    /// Normalization, scoring, and the accept/reject decision.
    pub identify_ms: f64,
    /// Whole chain per repetition (medians of stages need not add up to
    /// this).
    pub total_ms: f64,
}

/// Result of [`bench_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Repetitions measured.
    pub n_reps: usize,
    /// Median per-stage timings.
    pub median: StageTimings,
    /// Wall time and machine info.
    pub runtime: RuntimeMeta,
}

/// Times the full identification chain — preprocessing, feature
/// extraction, and the identify decision — over `n_reps` repetitions and
/// reports per-stage medians.
pub fn bench_pipeline(
    series: &CsiSeries,
    model: &IdentifierModel,
    cfg: &PipelineConfig,
    n_reps: usize,
) -> Result<BenchReport> {
    let start = Instant::now();
    cfg.validate()?;
    model.validate()?;
    if n_reps == 0 {
        return Err(Error::InvalidRange(
            "the benchmark needs at least one repetition".to_string(),
        ));
    }
    let to_ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let mut preprocess_times = Vec::with_capacity(n_reps);
    let mut feature_times = Vec::with_capacity(n_reps);
    let mut identify_times = Vec::with_capacity(n_reps);
    let mut totals = Vec::with_capacity(n_reps);
    for _ in 0..n_reps {
        let t0 = Instant::now();
        let pre = preprocess(series, cfg)?;
        let windowed = apply_window(pre, cfg.window_s)?;
        let mitigated = mitigate_series(&windowed, &cfg.mitigation)?;
        let t1 = Instant::now();
        let features = extract_features(&mitigated)?;
        let t2 = Instant::now();
        let decision = identify(model, &features);
        let t3 = Instant::now();
        std::hint::black_box(decision);
        preprocess_times.push(to_ms(t1 - t0));
        feature_times.push(to_ms(t2 - t1));
        identify_times.push(to_ms(t3 - t2));
        totals.push(to_ms(t3 - t0));
    }
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        quantile_sorted(&v, 0.5)
    };
    Ok(BenchReport {
        n_reps,
        median: StageTimings {
            preprocess_ms: median(preprocess_times),
            features_ms: median(feature_times),
            identify_ms: median(identify_times),
            total_ms: median(totals),
        },
        runtime: RuntimeMeta::capture(start),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_cohort_separated, BodyProfile, NoisePreset};
    use std::sync::LazyLock;

    /// A small, cleanly separated cohort shared across study tests:
    /// 5 subjects × 4 sessions of 1 s at 200 Hz, no noise.
    static COHORT: LazyLock<(Dataset, Vec<BodyProfile>)> = LazyLock::new(|| {
        generate_cohort_separated(5, 4, 1.0, 200.0, NoisePreset::Clean, 7, 0.15).unwrap()
    });

    fn test_config() -> PipelineConfig {
        PipelineConfig {
            split: SplitSpec {
                n_train: 2,
                n_test: 1,
            },
            ..PipelineConfig::default()
        }
    }

    fn flat_series(n_frames: usize, rate: f64) -> CsiSeries {
        use crate::csi::{CsiFrame, SubcarrierGrid};
        use num_complex::Complex64;
        let frame = CsiFrame::new([Complex64::new(1.0, 0.0); 30]).unwrap();
        CsiSeries::new(
            vec![frame; n_frames],
            rate,
            SubcarrierGrid::default(),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn flat_input_gives_equal_subcarrier_means() {
        let features = run_pipeline(&flat_series(400, 200.0), &PipelineConfig::default()).unwrap();
        let first = features.values[0];
        for j in 0..30 {
            assert!(
                (features.values[j] - first).abs() <= 1e-9,
                "subcarrier {j} mean {} vs {first}",
                features.values[j]
            );
        }
        // A constant profile has no spread.
        assert!(features.values[31].abs() <= 1e-9, "std of flat profile");
    }

    #[test]
    fn window_prefix_commutes_with_mitigation() {
        let (ds, _) = &*COHORT;
        let series = &ds.records[0].series;
        let cfg = PipelineConfig {
            window_s: Some(0.25),
            ..test_config()
        };
        let direct = run_pipeline(series, &cfg).unwrap();
        let full = mitigated_full(series, &cfg).unwrap();
        let frames = (0.25 * full.sample_rate_hz).floor() as usize;
        let via_prefix = extract_features(&full.first_rows(frames)).unwrap();
        assert_eq!(direct.values, via_prefix.values);
    }

    #[test]
    fn stationary_features_stable_under_truncation() {
        // A static multipath scene (no breathing, no noise): time means
        // converge, so a 1 s prefix yields features within 1% of the full
        // 5 s recording. The residual gap is the filter's settling tail
        // beyond the warm-up trim, ~0.1% of the mean.
        use crate::csi::SubcarrierGrid;
        use crate::simulator::{synthesize_series, BodyProfile, ChannelScenario, PathComponent};
        let grid = SubcarrierGrid::default();
        let scenario = ChannelScenario {
            los: PathComponent::referenced_to_center(0.85, 0.0, 8e-9, grid.center_hz),
            body_paths: vec![
                PathComponent::referenced_to_center(0.4, 1.2, 10e-9, grid.center_hz),
                PathComponent::referenced_to_center(0.12, 2.8, 14e-9, grid.center_hz),
            ],
            ..ChannelScenario::default()
        };
        let body = BodyProfile::new(0.25, 0.4, 1.0).unwrap();
        let full = synthesize_series(&scenario, &body, 5.0, 500.0, &grid, 9).unwrap();
        let cfg = PipelineConfig::default();
        let f_full = run_pipeline(&full, &cfg).unwrap();
        let f_short = run_pipeline(&full.truncated(500), &cfg).unwrap();
        for (i, (a, b)) in f_short.values.iter().zip(&f_full.values).enumerate() {
            assert!(
                (a - b).abs() <= 0.01 * b.abs().max(1e-9),
                "feature {i}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn window_accuracy_trends_up_on_clean_cohort() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let report = evaluate_sampling_time(ds, &[0.05, 0.1, 0.25, 1.0], &cfg, 13).unwrap();
        let mut inversions = 0usize;
        for pair in report.rows.windows(2) {
            if pair[1].mean < pair[0].mean {
                inversions += 1;
                assert!(
                    pair[0].mean - pair[1].mean <= 0.01,
                    "accuracy dropped from {} to {} with a longer window",
                    pair[0].mean,
                    pair[1].mean
                );
            }
        }
        assert!(inversions <= 1, "{inversions} trend inversions");
    }

    #[test]
    fn pipeline_window_shorter_than_a_frame_is_rejected() {
        let cfg = PipelineConfig {
            window_s: Some(1e-4),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&flat_series(400, 200.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::InvalidRange(_)));
    }

    #[test]
    fn different_subjects_produce_different_features() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let a = run_pipeline(&ds.records[0].series, &cfg).unwrap();
        let b = run_pipeline(&ds.records[4].series, &cfg).unwrap();
        let gap: f64 = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap > 1e-3, "distinct subjects too close: {gap}");
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = PipelineConfig::default();
        cfg.window_s = Some(-1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.split.n_test = 0;
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let parsed: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, PipelineConfig::default());
        let parsed: PipelineConfig =
            serde_json::from_str(r#"{"window_s": 0.5, "split": {"n_train": 3}}"#).unwrap();
        assert_eq!(parsed.window_s, Some(0.5));
        assert_eq!(parsed.split.n_train, 3);
        assert_eq!(parsed.split.n_test, SplitSpec::default().n_test);
    }

    #[test]
    fn volume_sweep_shape_metrics_and_recount() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let report = evaluate_volume_sweep(ds, &[2, 5], 3, &cfg, 11).unwrap();
        assert_eq!(report.mode, "volume");
        assert_eq!(report.rows.len(), 2);

        // Clean, well-separated cohort: 2-subject identification is easy.
        let row2 = &report.rows[0];
        assert_eq!(row2.key, 2.0);
        assert_eq!(row2.n_draws, 3);
        assert_eq!(row2.mean, 1.0, "clean 2-subject accuracy");
        assert_eq!(row2.tpr, None);

        // k = N: every draw picks the same subset, so the quartiles
        // collapse onto the mean.
        let row5 = &report.rows[1];
        assert_eq!(row5.q1, row5.q3);
        assert_eq!(row5.median, row5.mean);

        // Instance counts: one test session per subject, so k sessions
        // per draw.
        let count = |k: f64| report.instances.iter().filter(|i| i.key == k).count();
        assert_eq!(count(2.0), 3 * 2);
        assert_eq!(count(5.0), 3 * 5);

        // Per-row means must equal a recount over the instance log.
        for row in &report.rows {
            let of_row: Vec<_> = report
                .instances
                .iter()
                .filter(|i| i.key == row.key)
                .collect();
            let correct = of_row.iter().filter(|i| i.outcome == "correct").count();
            let recount = correct as f64 / of_row.len() as f64;
            assert!((row.mean - recount).abs() <= 1e-12);
        }
    }

    #[test]
    fn volume_sweep_is_deterministic() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let a = evaluate_volume_sweep(ds, &[2, 3], 2, &cfg, 5).unwrap();
        let b = evaluate_volume_sweep(ds, &[2, 3], 2, &cfg, 5).unwrap();
        assert_eq!(a.summary_csv(), b.summary_csv());
        assert_eq!(a.instances_csv(), b.instances_csv());
        assert_eq!(
            a.deterministic_json().unwrap(),
            b.deterministic_json().unwrap()
        );
        let c = evaluate_volume_sweep(ds, &[2, 3], 2, &cfg, 6).unwrap();
        assert_ne!(a.instances_csv(), c.instances_csv(), "seed must matter");
    }

    #[test]
    fn volume_sweep_range_checks() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        assert!(matches!(
            evaluate_volume_sweep(ds, &[], 3, &cfg, 0),
            Err(Error::InvalidRange(_))
        ));
        assert!(matches!(
            evaluate_volume_sweep(ds, &[1], 3, &cfg, 0),
            Err(Error::InvalidRange(_))
        ));
        assert!(matches!(
            evaluate_volume_sweep(ds, &[6], 3, &cfg, 0),
            Err(Error::InvalidRange(_))
        ));
        assert!(matches!(
            evaluate_volume_sweep(ds, &[2], 0, &cfg, 0),
            Err(Error::InvalidRange(_))
        ));
    }

    #[test]
    fn rejection_metrics_match_instance_log() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let report = evaluate_rejection(ds, &[2, 3], 2, &cfg, 21).unwrap();
        assert_eq!(report.mode, "rejection");
        let legal_outcomes = ["accept-correct", "accept-wrong", "reject-miss"];
        let attacker_outcomes = ["accept-false", "reject-correct"];
        for inst in &report.instances {
            assert!(
                legal_outcomes.contains(&inst.outcome.as_str())
                    || attacker_outcomes.contains(&inst.outcome.as_str())
            );
            if inst.outcome.starts_with("reject") {
                assert_eq!(inst.predicted, 0);
            } else {
                assert_ne!(inst.predicted, 0);
            }
        }
        for row in &report.rows {
            // Recompute mean TPR/TNR/BA from the per-draw instance log.
            let mut tprs = Vec::new();
            let mut tnrs = Vec::new();
            for draw in 0..row.n_draws {
                let of_draw: Vec<_> = report
                    .instances
                    .iter()
                    .filter(|i| i.key == row.key && i.draw == draw)
                    .collect();
                let legal = of_draw
                    .iter()
                    .filter(|i| legal_outcomes.contains(&i.outcome.as_str()))
                    .count();
                let attackers = of_draw.len() - legal;
                assert_eq!(of_draw.len(), 5, "every test session is scored");
                assert!(legal > 0 && attackers > 0);
                let ac = of_draw
                    .iter()
                    .filter(|i| i.outcome == "accept-correct")
                    .count();
                let rc = of_draw
                    .iter()
                    .filter(|i| i.outcome == "reject-correct")
                    .count();
                tprs.push(ac as f64 / legal as f64);
                tnrs.push(rc as f64 / attackers as f64);
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!((row.tpr.unwrap() - mean(&tprs)).abs() <= 1e-12);
            assert!((row.tnr.unwrap() - mean(&tnrs)).abs() <= 1e-12);
            let bas: Vec<f64> = tprs
                .iter()
                .zip(&tnrs)
                .map(|(p, n)| 0.5 * p + 0.5 * n)
                .collect();
            assert!((row.mean - mean(&bas)).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejection_rejects_full_cohort_enrollment() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        assert!(matches!(
            evaluate_rejection(ds, &[5], 2, &cfg, 0),
            Err(Error::InvalidRange(_))
        ));
    }

    #[test]
    fn threshold_extremes_bound_open_set_rates() {
        // Train a small identifier on synthetic separable features, then
        // override the learned threshold to its extremes.
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut held_out = Vec::new();
        for class in 0..2u32 {
            for i in 0..12 {
                let mut v = FeatureVector { values: [0.0; 39] };
                v.values[class as usize] = 2.0 + 0.01 * f64::from(i);
                v.values[38] = 1.0;
                if i < 10 {
                    features.push(v);
                    labels.push(class + 1);
                } else {
                    held_out.push((class + 1, 1u32, v));
                }
            }
        }
        // An attacker far from both classes.
        let mut stranger = FeatureVector { values: [0.0; 39] };
        stranger.values[5] = 3.0;
        held_out.push((9, 1, stranger));

        let mut model = train_identifier(&features, &labels, &TrainConfig::default()).unwrap();
        let subset = [1u32, 2u32];

        model.threshold = 1.0 + 1e-9; // confidence can never reach it
        let all_reject = score_open_set(&model, &subset, &held_out);
        assert_eq!(all_reject.tpr, 0.0);
        assert_eq!(all_reject.tnr, 1.0);
        assert_eq!(all_reject.balanced_accuracy, 0.5);

        model.threshold = 0.0; // nothing is ever rejected
        let all_accept = score_open_set(&model, &subset, &held_out);
        assert_eq!(all_accept.tnr, 0.0);
        assert_eq!(all_accept.tpr, 1.0, "separable legal instances accepted");
    }

    #[test]
    fn sampling_time_rows_and_full_window_matches_volume() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let report = evaluate_sampling_time(ds, &[0.25, 1.0], &cfg, 11).unwrap();
        assert_eq!(report.mode, "window");
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert_eq!(row.n_draws, 1);
            assert_eq!(row.q1, row.mean);
            assert_eq!(row.q3, row.mean);
        }
        // A window covering the whole recording reproduces the volume
        // sweep at k = N (same split stream, same model, same features).
        let volume = evaluate_volume_sweep(ds, &[5], 1, &cfg, 11).unwrap();
        assert_eq!(report.rows[1].mean, volume.rows[0].mean);

        let err = evaluate_sampling_time(ds, &[1e-4], &cfg, 11).unwrap_err();
        assert!(matches!(err, Error::InvalidRange(_)));
        let err = evaluate_sampling_time(ds, &[], &cfg, 11).unwrap_err();
        assert!(matches!(err, Error::InvalidRange(_)));
    }

    #[test]
    fn session_split_trains_on_early_sessions() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let report = evaluate_session_split(ds, 2, &cfg).unwrap();
        assert_eq!(report.mode, "session-split");
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].key, 2.0);
        // 5 subjects × sessions {3, 4} tested.
        assert_eq!(report.instances.len(), 10);
        for inst in &report.instances {
            assert!(inst.session_index > 2);
        }
        assert!(matches!(
            evaluate_session_split(ds, 0, &cfg),
            Err(Error::InvalidRange(_))
        ));
        assert!(matches!(
            evaluate_session_split(ds, 4, &cfg),
            Err(Error::InvalidRange(_))
        ));
    }

    #[test]
    fn csv_headers_match_modes() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let volume = evaluate_volume_sweep(ds, &[2], 1, &cfg, 3).unwrap();
        assert!(volume
            .summary_csv()
            .starts_with("k,n_draws,mean_accuracy,q1,median,q3\n"));
        let rejection = evaluate_rejection(ds, &[2], 1, &cfg, 3).unwrap();
        assert!(rejection
            .summary_csv()
            .starts_with("k,n_draws,mean_ba,mean_tpr,mean_tnr,q1,median,q3\n"));
        let window = evaluate_sampling_time(ds, &[0.5], &cfg, 3).unwrap();
        assert!(window
            .summary_csv()
            .starts_with("window_s,n_draws,accuracy,q1,median,q3\n"));
        assert!(window
            .instances_csv()
            .starts_with("key,draw,subject,session,truth,predicted,confidence,outcome\n"));

        // Integral keys print without a decimal point; fractional ones
        // round-trip.
        assert!(volume.summary_csv().lines().nth(1).unwrap().starts_with("2,"));
        assert!(window.summary_csv().lines().nth(1).unwrap().starts_with("0.5,"));
    }

    #[test]
    fn deterministic_json_strips_runtime_only() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let volume = evaluate_volume_sweep(ds, &[2], 1, &cfg, 3).unwrap();
        let json = volume.deterministic_json().unwrap();
        assert!(!json.contains("\"runtime\""));
        assert!(!json.contains("\"tpr\""), "closed-set rows omit tpr/tnr");
        assert!(json.contains("\"rows\""));
        assert!(json.contains("\"instances\""));
        let rejection = evaluate_rejection(ds, &[2], 1, &cfg, 3).unwrap();
        assert!(rejection.deterministic_json().unwrap().contains("\"tpr\""));
    }

    #[test]
    fn report_json_round_trips() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let report = evaluate_volume_sweep(ds, &[2], 1, &cfg, 3).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn bench_reports_positive_finite_medians() {
        let (ds, _) = &*COHORT;
        let cfg = test_config();
        let train_features =
            group_by_subject(dataset_features(ds, &cfg).unwrap());
        let (features, labels) = subset_training_set(&ds.subjects(), &train_features).unwrap();
        let model = train_identifier(&features, &labels, &cfg.train).unwrap();
        let report = bench_pipeline(&ds.records[0].series, &model, &cfg, 5).unwrap();
        assert_eq!(report.n_reps, 5);
        let m = report.median;
        for v in [m.preprocess_ms, m.features_ms, m.identify_ms, m.total_ms] {
            assert!(v.is_finite() && v >= 0.0);
        }
        assert!(m.total_ms >= m.preprocess_ms);
        assert!(matches!(
            bench_pipeline(&ds.records[0].series, &model, &cfg, 0),
            Err(Error::InvalidRange(_))
        ));

        // Warm medians are stable: a single repetition agrees with the
        // median of 100 within 5× in either direction.
        let single = bench_pipeline(&ds.records[0].series, &model, &cfg, 1).unwrap();
        let many = bench_pipeline(&ds.records[0].series, &model, &cfg, 100).unwrap();
        let ratio = single.median.total_ms / many.median.total_ms;
        assert!(
            (0.2..=5.0).contains(&ratio),
            "single-rep total {} ms vs 100-rep median {} ms",
            single.median.total_ms,
            many.median.total_ms
        );
    }
}
