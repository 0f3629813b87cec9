//! One-vs-all linear SVM identification with open-set rejection, plus a
//! linear support-vector regressor for body-parameter studies.
//!
//! **Identification.** For `N` enrolled people, `N` binary linear SVMs are
//! trained (each person against all others) on normalized feature
//! vectors. Each model is the minimizer of the L2-regularized squared-
//! hinge primal
//!
//! ```text
//! F(w, b) = ½‖w‖² + C·Σᵢ max(0, 1 − yᵢ·(w·xᵢ + b))²
//! ```
//!
//! with the bias unregularized. An instance is scored by all `N` models,
//! the scores pass through a softmax, and the argmax class wins. The
//! softmax maximum doubles as a confidence: a threshold learned as the
//! nearest-rank 5th percentile of confidences over correctly classified
//! training instances separates enrolled people from strangers — a
//! confidence strictly below the threshold means *reject*.
//!
//! **Solver.** Both the SVM and the SVR objectives are convex and
//! piecewise quadratic, so one semi-smooth Newton method serves both: at
//! each iteration the active samples define a generalized Hessian
//! (identity on the weight block plus rank-one terms), a Cholesky solve
//! yields the Newton direction, and Armijo backtracking guarantees
//! descent. Training starts from zero, uses no randomness, and is
//! bit-deterministic for fixed input — the `seed` in [`TrainConfig`] is
//! carried for API stability but nothing consumes it.
//!
//! **Regression.** The same machinery minimizes
//! `½‖w‖² + C·Σᵢ max(0, |w·xᵢ + b − tᵢ| − ε)²` — a squared
//! ε-insensitive loss — for mapping features onto continuous body
//! parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize, serde_farray, FeatureVector, Normalizer, N_FEATURES};

/// Dimension of the solver's parameter vector: 39 weights plus the bias.
const DIM: usize = N_FEATURES + 1;

/// Training hyper-parameters shared by the SVM and SVR trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Loss weight C of the primal objective.
    pub c: f64,
    /// Convergence tolerance on the gradient's max-norm.
    pub tolerance: f64,
    /// Hard cap on Newton iterations.
    pub max_epochs: usize,
    /// Reserved for stochastic trainers; the deterministic Newton solver
    /// ignores it, so any value yields bit-identical models.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Checks `C > 0`, `tolerance > 0`, `max_epochs ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "regularization C must be positive, got {}",
                self.c
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidSpec(
                "max_epochs must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One binary classifier of the one-vs-all ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// The class this model separates from the rest (1-based).
    pub class_id: u32,
    /// Intercept term.
    pub bias: f64,
    /// Linear weights over the 39 normalized features.
    #[serde(with = "serde_farray")]
    pub weights: [f64; N_FEATURES],
}

impl SvmModel {
    /// Raw decision value `w·x + b` on a normalized feature vector.
    #[must_use]
    pub fn score(&self, x: &FeatureVector) -> f64 {
        dot(&self.weights, &x.values) + self.bias
    }
}

/// Linear support-vector regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    /// Intercept term.
    pub bias: f64,
    /// Linear weights over the 39 normalized features.
    #[serde(with = "serde_farray")]
    pub weights: [f64; N_FEATURES],
}

/// Default insensitivity half-width of the SVR loss, in target units.
pub const SVR_DEFAULT_EPSILON: f64 = 0.01;

/// The complete identification model: the normalizer fitted on training
/// data, the one-vs-all ensemble, and the learned rejection threshold.
///
/// Serializes as JSON
/// `{n_classes, threshold, normalizer:{min,max}, models:[{class_id, bias,
/// weights[39]}]}` with full-precision numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierModel {
    /// Number of enrolled classes, `≥ 2`.
    pub n_classes: u32,
    /// Minimum softmax confidence for acceptance; in (0, 1).
    pub threshold: f64,
    /// Feature normalizer fitted on the training set.
    pub normalizer: Normalizer,
    /// Binary models ordered by `class_id` = 1, 2, …, `n_classes`.
    pub models: Vec<SvmModel>,
}

/// Outcome of an identification attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Confidence fell below the model's threshold: treat the person as
    /// not enrolled.
    Reject,
    /// The person is identified as `identity` with the softmax maximum as
    /// `confidence` (which is ≥ the model's threshold by construction).
    Accept {
        /// Winning class (1-based).
        identity: u32,
        /// Softmax confidence of the winning class.
        confidence: f64,
    },
}

fn dot(a: &[f64; N_FEATURES], b: &[f64; N_FEATURES]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

// ---------------------------------------------------------------------------
// Newton core
// ---------------------------------------------------------------------------

/// Per-sample loss interface for the Newton solver: given the sample index
/// and the linear value `u = w·xᵢ + b`, return `(loss, ∂loss/∂u,
/// ∂²loss/∂u²)`. Losses must be convex and piecewise quadratic in `u`
/// (the second derivative is piecewise constant).
trait SampleLoss: Sync {
    fn eval(&self, i: usize, u: f64) -> (f64, f64, f64);
}

/// Squared hinge with ±1 labels: `C·max(0, 1 − y·u)²`.
struct SquaredHinge<'a> {
    ys: &'a [f64],
    c: f64,
}

impl SampleLoss for SquaredHinge<'_> {
    fn eval(&self, i: usize, u: f64) -> (f64, f64, f64) {
        let y = self.ys[i];
        let r = 1.0 - y * u;
        if r > 0.0 {
            (self.c * r * r, -2.0 * self.c * y * r, 2.0 * self.c)
        } else {
            (0.0, 0.0, 0.0)
        }
    }
}

/// Squared ε-insensitive regression loss: `C·max(0, |u − t| − ε)²`.
struct SquaredEpsilon<'a> {
    targets: &'a [f64],
    epsilon: f64,
    c: f64,
}

impl SampleLoss for SquaredEpsilon<'_> {
    fn eval(&self, i: usize, u: f64) -> (f64, f64, f64) {
        let r = u - self.targets[i];
        let excess = r.abs() - self.epsilon;
        if excess > 0.0 {
            (
                self.c * excess * excess,
                2.0 * self.c * r.signum() * excess,
                2.0 * self.c,
            )
        } else {
            (0.0, 0.0, 0.0)
        }
    }
}

/// Objective value at `theta` (weights ‖ bias).
fn objective(xs: &[[f64; N_FEATURES]], loss: &dyn SampleLoss, theta: &[f64; DIM]) -> f64 {
    let (w, b) = split(theta);
    let mut obj = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    for (i, x) in xs.iter().enumerate() {
        let u = dot(w, x) + b;
        obj += loss.eval(i, u).0;
    }
    obj
}

fn split(theta: &[f64; DIM]) -> (&[f64; N_FEATURES], f64) {
    let w: &[f64; N_FEATURES] = theta[..N_FEATURES].try_into().expect("fixed split");
    (w, theta[N_FEATURES])
}

/// Cholesky solve of the symmetric positive-definite system `a·x = rhs`.
/// Returns `None` when a pivot collapses (matrix not positive definite).
fn solve_spd(a: &mut [[f64; DIM]; DIM], rhs: &[f64; DIM]) -> Option<[f64; DIM]> {
    // In-place lower-triangular factorization.
    for k in 0..DIM {
        let mut d = a[k][k];
        for j in 0..k {
            d -= a[k][j] * a[k][j];
        }
        if d <= 1e-300 {
            return None;
        }
        let d = d.sqrt();
        a[k][k] = d;
        for i in k + 1..DIM {
            let mut v = a[i][k];
            for j in 0..k {
                v -= a[i][j] * a[k][j];
            }
            a[i][k] = v / d;
        }
    }
    // Forward then backward substitution.
    let mut y = [0.0f64; DIM];
    for i in 0..DIM {
        let mut v = rhs[i];
        for j in 0..i {
            v -= a[i][j] * y[j];
        }
        y[i] = v / a[i][i];
    }
    let mut x = [0.0f64; DIM];
    for i in (0..DIM).rev() {
        let mut v = y[i];
        for j in i + 1..DIM {
            v -= a[j][i] * x[j];
        }
        x[i] = v / a[i][i];
    }
    Some(x)
}

/// Minimizes `½‖w‖² + Σᵢ loss(i, w·xᵢ + b)` by a semi-smooth Newton
/// iteration with Armijo backtracking. Deterministic; starts from zero.
fn newton_minimize(
    xs: &[[f64; N_FEATURES]],
    loss: &dyn SampleLoss,
    cfg: &TrainConfig,
) -> ([f64; N_FEATURES], f64) {
    let mut theta = [0.0f64; DIM];
    let mut active: Vec<(usize, f64)> = Vec::with_capacity(xs.len());

    for _ in 0..cfg.max_epochs {
        // Objective, gradient, and the active set in one pass.
        let (w, b) = split(&theta);
        let mut obj = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let mut grad = [0.0f64; DIM];
        grad[..N_FEATURES].copy_from_slice(w);
        active.clear();
        for (i, x) in xs.iter().enumerate() {
            let u = dot(w, x) + b;
            let (l, d1, d2) = loss.eval(i, u);
            obj += l;
            if d1 != 0.0 {
                for (g, xv) in grad[..N_FEATURES].iter_mut().zip(x) {
                    *g += d1 * xv;
                }
                grad[N_FEATURES] += d1;
            }
            if d2 != 0.0 {
                active.push((i, d2));
            }
        }
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm <= cfg.tolerance {
            break;
        }

        // Generalized Hessian: identity on the weight block (the bias is
        // unregularized) plus the active samples' rank-one terms.
        let mut hessian = [[0.0f64; DIM]; DIM];
        for (j, row) in hessian.iter_mut().take(N_FEATURES).enumerate() {
            row[j] = 1.0;
        }
        for &(i, d2) in &active {
            let x = &xs[i];
            for j in 0..DIM {
                let zj = if j < N_FEATURES { x[j] } else { 1.0 };
                if zj == 0.0 {
                    continue;
                }
                let scaled = d2 * zj;
                for k in j..DIM {
                    let zk = if k < N_FEATURES { x[k] } else { 1.0 };
                    hessian[k][j] += scaled * zk;
                }
            }
        }
        // (Only the lower triangle was filled; the solver reads just that.)

        // Newton direction, with escalating ridge damping if the matrix
        // is singular (e.g. an empty active set leaves the bias free).
        let mut direction = None;
        let mut damping = 0.0;
        for _ in 0..8 {
            let mut h = hessian;
            if damping > 0.0 {
                for (j, row) in h.iter_mut().enumerate() {
                    row[j] += damping;
                }
            }
            let mut neg = grad;
            for v in &mut neg {
                *v = -*v;
            }
            if let Some(p) = solve_spd(&mut h, &neg) {
                direction = Some(p);
                break;
            }
            damping = if damping == 0.0 { 1e-10 } else { damping * 100.0 };
        }
        let mut direction = direction.unwrap_or_else(|| {
            let mut p = grad;
            for v in &mut p {
                *v = -*v;
            }
            p
        });
        // Guard: fall back to steepest descent if the solve was not a
        // descent direction (cannot happen for an SPD system, but cheap).
        let slope: f64 = grad.iter().zip(&direction).map(|(g, p)| g * p).sum();
        if slope >= 0.0 {
            for (p, g) in direction.iter_mut().zip(&grad) {
                *p = -g;
            }
        }
        let slope: f64 = grad.iter().zip(&direction).map(|(g, p)| g * p).sum();

        // Armijo backtracking.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut candidate = theta;
            for (c, p) in candidate.iter_mut().zip(&direction) {
                *c += step * p;
            }
            if objective(xs, loss, &candidate) <= obj + 1e-4 * step * slope {
                theta = candidate;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // Step size underflow: we are at numerical optimum.
        }
    }
    let (w, b) = split(&theta);
    (*w, b)
}

// ---------------------------------------------------------------------------
// One-vs-all training and inference
// ---------------------------------------------------------------------------

fn check_training_input(features: &[FeatureVector], labels: &[u32]) -> Result<u32> {
    if features.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("training on no instances"));
    }
    let max_label = *labels.iter().max().expect("non-empty");
    if max_label < 2 {
        return Err(Error::InvalidLabels(
            "training needs at least 2 classes".to_string(),
        ));
    }
    let mut seen = vec![false; max_label as usize + 1];
    for &l in labels {
        if l == 0 {
            return Err(Error::InvalidLabels(
                "class IDs are 1-based; got 0".to_string(),
            ));
        }
        seen[l as usize] = true;
    }
    if let Some(missing) = (1..=max_label).find(|&l| !seen[l as usize]) {
        return Err(Error::InvalidLabels(format!(
            "labels must cover 1..={max_label}, but class {missing} has no instances"
        )));
    }
    Ok(max_label)
}

/// Trains one binary squared-hinge SVM: `class_id` against everything
/// else.
fn train_binary(
    xs: &[[f64; N_FEATURES]],
    labels: &[u32],
    class_id: u32,
    cfg: &TrainConfig,
) -> SvmModel {
    let ys: Vec<f64> = labels
        .iter()
        .map(|&l| if l == class_id { 1.0 } else { -1.0 })
        .collect();
    let loss = SquaredHinge { ys: &ys, c: cfg.c };
    let (weights, bias) = newton_minimize(xs, &loss, cfg);
    SvmModel {
        class_id,
        bias,
        weights,
    }
}

/// Trains the one-vs-all ensemble on normalized features.
///
/// `labels` must be 1-based and cover `1..=N` for some `N ≥ 2`. Binary
/// subproblems are independent and run in parallel; results are assembled
/// in class order, so parallel and serial execution produce identical
/// models.
pub fn train_one_vs_all(
    features: &[FeatureVector],
    labels: &[u32],
    cfg: &TrainConfig,
) -> Result<Vec<SvmModel>> {
    cfg.validate()?;
    let n_classes = check_training_input(features, labels)?;
    let xs: Vec<[f64; N_FEATURES]> = features.iter().map(|f| f.values).collect();
    Ok((1..=n_classes)
        .into_par_iter()
        .map(|class_id| train_binary(&xs, labels, class_id, cfg))
        .collect())
}

/// Raw decision values of every model on one normalized instance.
#[must_use]
pub fn scores(models: &[SvmModel], x: &FeatureVector) -> Vec<f64> {
    models.iter().map(|m| m.score(x)).collect()
}

/// Argmax class (1-based); ties break toward the smallest class ID.
///
/// The input may be raw scores or softmax confidences — softmax is order
/// preserving, so the prediction is identical either way.
#[must_use]
pub fn predict(scores: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best as u32 + 1
}

/// Softmax with max-subtraction for overflow safety: sums to 1 and
/// preserves order for any finite input.
#[must_use]
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Nearest-rank percentile: the element of the ascending-sorted sample at
/// 1-based index `⌈fraction·n⌉` (an actual observed value, never an
/// interpolation).
#[must_use]
pub fn nearest_rank_percentile(values: &[f64], fraction: f64) -> f64 {
    debug_assert!(!values.is_empty());
    debug_assert!((0.0..=1.0).contains(&fraction));
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (fraction * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Learns the rejection threshold: the nearest-rank 5th percentile of the
/// softmax maxima over the *correctly classified* training instances.
///
/// Errors with [`Error::DegenerateModel`] when every instance is
/// misclassified (no score distribution to calibrate on).
pub fn learn_threshold(
    models: &[SvmModel],
    features: &[FeatureVector],
    labels: &[u32],
) -> Result<f64> {
    let mut surviving = Vec::with_capacity(features.len());
    for (x, &label) in features.iter().zip(labels) {
        let s = scores(models, x);
        if predict(&s) != label {
            continue;
        }
        let conf = softmax(&s);
        surviving.push(conf.into_iter().fold(f64::NEG_INFINITY, f64::max));
    }
    if surviving.is_empty() {
        return Err(Error::DegenerateModel(
            "threshold calibration impossible: every training instance is misclassified"
                .to_string(),
        ));
    }
    Ok(nearest_rank_percentile(&surviving, 0.05))
}

/// Trains the full identification model from **raw** (unnormalized)
/// training features: fits the normalizer, trains the ensemble on the
/// normalized set, and calibrates the rejection threshold.
pub fn train_identifier(
    features: &[FeatureVector],
    labels: &[u32],
    cfg: &TrainConfig,
) -> Result<IdentifierModel> {
    let normalizer = crate::features::fit_normalizer(features)?;
    let normalized: Vec<FeatureVector> =
        features.iter().map(|f| normalize(f, &normalizer)).collect();
    let models = train_one_vs_all(&normalized, labels, cfg)?;
    let threshold = learn_threshold(&models, &normalized, labels)?;
    Ok(IdentifierModel {
        n_classes: models.len() as u32,
        threshold,
        normalizer,
        models,
    })
}

impl IdentifierModel {
    /// Softmax confidences on a raw instance (normalization applied
    /// internally).
    #[must_use]
    pub fn confidences(&self, raw_features: &FeatureVector) -> Vec<f64> {
        let x = normalize(raw_features, &self.normalizer);
        softmax(&scores(&self.models, &x))
    }

    /// Closed-set classification of a raw instance: winning class and its
    /// softmax confidence, ignoring the rejection threshold.
    #[must_use]
    pub fn classify(&self, raw_features: &FeatureVector) -> (u32, f64) {
        let conf = self.confidences(raw_features);
        let winner = predict(&conf);
        (winner, conf[winner as usize - 1])
    }

    /// Structural sanity of a deserialized model.
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.models.len() != self.n_classes as usize {
            return Err(Error::InvalidInput(format!(
                "model claims {} classes but holds {} binary models",
                self.n_classes,
                self.models.len()
            )));
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.class_id != i as u32 + 1 {
                return Err(Error::InvalidInput(format!(
                    "model at position {i} has class_id {}, expected {}",
                    m.class_id,
                    i + 1
                )));
            }
            if !m.bias.is_finite() || m.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "model for class {} has non-finite parameters",
                    m.class_id
                )));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        self.normalizer.validate()
    }

    /// Serializes to the documented JSON layout.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Deserializes and validates a model.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

/// Open-set identification of a raw instance: the softmax maximum decides
/// between [`Decision::Accept`] (with the winning identity) and
/// [`Decision::Reject`]. The comparison is strict — a confidence exactly
/// at the threshold accepts.
#[must_use]
pub fn identify(model: &IdentifierModel, raw_features: &FeatureVector) -> Decision {
    let (identity, confidence) = model.classify(raw_features);
    if confidence < model.threshold {
        Decision::Reject
    } else {
        Decision::Accept {
            identity,
            confidence,
        }
    }
}

// ---------------------------------------------------------------------------
// Support-vector regression
// ---------------------------------------------------------------------------

/// Trains a linear SVR with the squared ε-insensitive loss on normalized
/// features. `epsilon` is the no-penalty half-width in target units
/// ([`SVR_DEFAULT_EPSILON`] is the conventional default).
pub fn train_svr(
    features: &[FeatureVector],
    targets: &[f64],
    epsilon: f64,
    cfg: &TrainConfig,
) -> Result<SvrModel> {
    cfg.validate()?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    if features.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature vectors but {} targets",
            features.len(),
            targets.len()
        )));
    }
    if features.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "SVR needs at least 2 training pairs, got {}",
            features.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite regression target".to_string()));
    }
    let xs: Vec<[f64; N_FEATURES]> = features.iter().map(|f| f.values).collect();
    let loss = SquaredEpsilon {
        targets,
        epsilon,
        c: cfg.c,
    };
    let (weights, bias) = newton_minimize(&xs, &loss, cfg);
    Ok(SvrModel { bias, weights })
}

/// SVR prediction `w·x + b` on a normalized instance.
#[must_use]
pub fn predict_svr(model: &SvrModel, x: &FeatureVector) -> f64 {
    dot(&model.weights, &x.values) + model.bias
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::derive_rng;
    use proptest::prelude::*;
    use rand::Rng;

    // ----- Independent first-order oracle (coded before the solver) -----
    // Plain gradient descent with Armijo backtracking: slow but simple
    // enough to trust. Used to cross-check the Newton solver's objective.

    fn oracle_descend(
        xs: &[[f64; N_FEATURES]],
        ys: &[f64],
        c: f64,
        iterations: usize,
    ) -> ([f64; DIM], f64) {
        let value = |theta: &[f64; DIM]| -> f64 {
            let mut obj = 0.5 * theta[..N_FEATURES].iter().map(|v| v * v).sum::<f64>();
            for (x, &y) in xs.iter().zip(ys) {
                let mut u = theta[N_FEATURES];
                for (w, xv) in theta[..N_FEATURES].iter().zip(x) {
                    u += w * xv;
                }
                let r = 1.0 - y * u;
                if r > 0.0 {
                    obj += c * r * r;
                }
            }
            obj
        };
        let mut theta = [0.0f64; DIM];
        let mut step = 1.0;
        for _ in 0..iterations {
            let mut grad = [0.0f64; DIM];
            grad[..N_FEATURES].copy_from_slice(&theta[..N_FEATURES]);
            for (x, &y) in xs.iter().zip(ys) {
                let mut u = theta[N_FEATURES];
                for (w, xv) in theta[..N_FEATURES].iter().zip(x) {
                    u += w * xv;
                }
                let r = 1.0 - y * u;
                if r > 0.0 {
                    let d1 = -2.0 * c * y * r;
                    for (g, xv) in grad[..N_FEATURES].iter_mut().zip(x) {
                        *g += d1 * xv;
                    }
                    grad[N_FEATURES] += d1;
                }
            }
            let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
            if gnorm2.sqrt() < 1e-9 {
                break;
            }
            let base = value(&theta);
            step *= 2.0; // allow recovery after conservative steps
            let mut moved = false;
            for _ in 0..80 {
                let mut cand = theta;
                for (t, g) in cand.iter_mut().zip(&grad) {
                    *t -= step * g;
                }
                if value(&cand) <= base - 1e-4 * step * gnorm2 {
                    theta = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let obj = value(&theta);
        (theta, obj)
    }

    fn vector(values: [f64; N_FEATURES]) -> FeatureVector {
        FeatureVector { values }
    }

    fn embedded_2d(points: &[(f64, f64)]) -> Vec<FeatureVector> {
        points
            .iter()
            .map(|&(a, b)| {
                let mut v = [0.0; N_FEATURES];
                v[0] = a;
                v[1] = b;
                vector(v)
            })
            .collect()
    }

    /// Random Gaussian class clusters in feature space: `k` classes,
    /// `per_class` points each, cluster centers in [−1, 1]^39.
    fn gaussian_clusters(
        seed: u64,
        k: usize,
        per_class: usize,
        sigma: f64,
    ) -> (Vec<FeatureVector>, Vec<u32>) {
        let mut rng = derive_rng(seed, &[k as u64, per_class as u64]);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for class in 1..=k {
            let center: Vec<f64> = (0..N_FEATURES)
                .map(|_| rng.random_range(-1.0f64..1.0))
                .collect();
            for _ in 0..per_class {
                let mut v = [0.0; N_FEATURES];
                for (slot, &c) in v.iter_mut().zip(&center) {
                    // Box–Muller keeps this independent of external
                    // distribution crates inside the test.
                    let u1: f64 = rng.random_range(1e-12f64..1.0);
                    let u2: f64 = rng.random_range(0.0f64..1.0);
                    let gauss =
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    *slot = c + sigma * gauss;
                }
                features.push(vector(v));
                labels.push(class as u32);
            }
        }
        (features, labels)
    }

    #[test]
    fn separable_pair_reaches_perfect_training_accuracy() {
        let features = embedded_2d(&[(-1.0, 0.0), (1.0, 0.0)]);
        let labels = vec![1u32, 2];
        let models = train_one_vs_all(&features, &labels, &TrainConfig::default()).unwrap();
        assert_eq!(models.len(), 2);
        for (x, &label) in features.iter().zip(&labels) {
            let s = scores(&models, x);
            assert_eq!(predict(&s), label);
            // Each binary model separates its own class by sign.
            for m in &models {
                let sign_ok = if m.class_id == label {
                    m.score(x) > 0.0
                } else {
                    m.score(x) < 0.0
                };
                assert!(sign_ok, "class {} score {}", m.class_id, m.score(x));
            }
        }
    }

    #[test]
    fn objective_matches_first_order_oracle() {
        for seed in 0..5u64 {
            let (features, labels) = gaussian_clusters(seed, 3, 20, 0.35);
            let xs: Vec<[f64; N_FEATURES]> = features.iter().map(|f| f.values).collect();
            let cfg = TrainConfig::default();
            let models = train_one_vs_all(&features, &labels, &cfg).unwrap();
            for m in &models {
                let ys: Vec<f64> = labels
                    .iter()
                    .map(|&l| if l == m.class_id { 1.0 } else { -1.0 })
                    .collect();
                let loss = SquaredHinge { ys: &ys, c: cfg.c };
                let mut theta = [0.0; DIM];
                theta[..N_FEATURES].copy_from_slice(&m.weights);
                theta[N_FEATURES] = m.bias;
                let newton_obj = objective(&xs, &loss, &theta);
                let (_, oracle_obj) = oracle_descend(&xs, &ys, cfg.c, 20_000);
                let gap = (newton_obj - oracle_obj).abs() / oracle_obj.max(1e-12);
                assert!(
                    gap <= 0.01,
                    "seed {seed} class {}: newton {newton_obj} vs oracle {oracle_obj}",
                    m.class_id
                );
            }
        }
    }

    #[test]
    fn duplicated_data_equals_doubled_c() {
        let (features, labels) = gaussian_clusters(11, 2, 15, 0.4);
        let mut doubled_features = features.clone();
        doubled_features.extend(features.iter().cloned());
        let mut doubled_labels = labels.clone();
        doubled_labels.extend(labels.iter().copied());

        let base = TrainConfig {
            tolerance: 1e-8,
            ..TrainConfig::default()
        };
        let dup = train_one_vs_all(&doubled_features, &doubled_labels, &base).unwrap();
        let c2 = train_one_vs_all(
            &features,
            &labels,
            &TrainConfig {
                c: 2.0,
                ..base
            },
        )
        .unwrap();
        for (a, b) in dup.iter().zip(&c2) {
            for (wa, wb) in a.weights.iter().zip(&b.weights) {
                assert!((wa - wb).abs() <= 1e-4, "{wa} vs {wb}");
            }
            assert!((a.bias - b.bias).abs() <= 1e-4);
        }
    }

    #[test]
    fn training_is_deterministic_and_parallel_equals_serial() {
        let (features, labels) = gaussian_clusters(3, 4, 12, 0.3);
        let cfg = TrainConfig::default();
        let once = train_one_vs_all(&features, &labels, &cfg).unwrap();
        let twice = train_one_vs_all(&features, &labels, &cfg).unwrap();
        assert_eq!(once, twice, "training must be bit-deterministic");

        let xs: Vec<[f64; N_FEATURES]> = features.iter().map(|f| f.values).collect();
        let serial: Vec<SvmModel> = (1..=4)
            .map(|class_id| train_binary(&xs, &labels, class_id, &cfg))
            .collect();
        assert_eq!(once, serial, "parallel and serial must agree bit-exactly");
    }

    #[test]
    fn solver_beats_the_zero_model() {
        let (features, labels) = gaussian_clusters(9, 3, 10, 0.5);
        let xs: Vec<[f64; N_FEATURES]> = features.iter().map(|f| f.values).collect();
        let cfg = TrainConfig::default();
        let models = train_one_vs_all(&features, &labels, &cfg).unwrap();
        for m in &models {
            let ys: Vec<f64> = labels
                .iter()
                .map(|&l| if l == m.class_id { 1.0 } else { -1.0 })
                .collect();
            let loss = SquaredHinge { ys: &ys, c: cfg.c };
            let mut theta = [0.0; DIM];
            theta[..N_FEATURES].copy_from_slice(&m.weights);
            theta[N_FEATURES] = m.bias;
            let trained = objective(&xs, &loss, &theta);
            let at_zero = objective(&xs, &loss, &[0.0; DIM]);
            assert!(
                trained < at_zero,
                "class {}: {trained} should beat zero-model {at_zero}",
                m.class_id
            );
        }
    }

    #[test]
    fn bad_labels_are_rejected() {
        let (features, _) = gaussian_clusters(1, 2, 5, 0.3);
        let cfg = TrainConfig::default();
        // Single class.
        let single = vec![1u32; features.len()];
        assert!(matches!(
            train_one_vs_all(&features, &single, &cfg),
            Err(Error::InvalidLabels(_))
        ));
        // Gap in coverage: {1, 3} misses 2.
        let mut gappy = vec![1u32; features.len()];
        for l in gappy.iter_mut().skip(5) {
            *l = 3;
        }
        assert!(matches!(
            train_one_vs_all(&features, &gappy, &cfg),
            Err(Error::InvalidLabels(_))
        ));
        // Zero label.
        let mut zeroed = vec![1u32, 2, 1, 2, 1, 2, 1, 2, 1, 2];
        zeroed[3] = 0;
        assert!(matches!(
            train_one_vs_all(&features, &zeroed, &cfg),
            Err(Error::InvalidLabels(_))
        ));
        // Length mismatch.
        assert!(matches!(
            train_one_vs_all(&features, &[1u32, 2], &cfg),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn score_examples() {
        let zero_w = SvmModel {
            class_id: 1,
            bias: 0.5,
            weights: [0.0; N_FEATURES],
        };
        let anything = vector([0.3; N_FEATURES]);
        assert_eq!(zero_w.score(&anything), 0.5);

        let mut with_b = zero_w.clone();
        with_b.bias = -2.5;
        assert_eq!(with_b.score(&vector([0.0; N_FEATURES])), -2.5);

        let mut e1 = [0.0; N_FEATURES];
        e1[0] = 1.0;
        let basis = SvmModel {
            class_id: 1,
            bias: 0.0,
            weights: e1,
        };
        let mut x = [0.0; N_FEATURES];
        x[0] = -0.25;
        assert_eq!(basis.score(&vector(x)), -0.25);
    }

    #[test]
    fn predict_argmax_and_tie_rule() {
        assert_eq!(predict(&[0.2, 0.9, 0.1]), 2);
        assert_eq!(predict(&[0.5, 0.5]), 1, "ties break to the smaller ID");
        assert_eq!(predict(&[1.2, 1.9, 1.1]), 2, "shift invariance");
    }

    #[test]
    fn softmax_basics() {
        let out = softmax(&[0.0, 0.0]);
        assert_eq!(out, vec![0.5, 0.5]);

        let a = softmax(&[0.3, -0.7, 1.1]);
        let b = softmax(&[10.3, 9.3, 11.1]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-15, "shift invariance");
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

        // No overflow on extreme scores.
        let extreme = softmax(&[1000.0, 0.0]);
        assert!(extreme[0] > 0.999999 && extreme[1] < 1e-6);
        assert!(extreme.iter().all(|p| p.is_finite()));
    }

    proptest! {
        #[test]
        fn softmax_preserves_prediction(
            scores_in in proptest::collection::vec(-50.0f64..50.0, 2..8)
        ) {
            let direct = predict(&scores_in);
            let via_softmax = predict(&softmax(&scores_in));
            prop_assert_eq!(direct, via_softmax);
        }

        #[test]
        fn softmax_sums_to_one(
            scores_in in proptest::collection::vec(-300.0f64..300.0, 2..10)
        ) {
            let s = softmax(&scores_in);
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(s.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn nearest_rank_on_uniform_grid() {
        // {0.01, 0.02, …, 1.00}: the 5th percentile is the 5th smallest.
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        assert_eq!(nearest_rank_percentile(&grid, 0.05), 0.05);
        // Single value.
        assert_eq!(nearest_rank_percentile(&[0.42], 0.05), 0.42);
        // Unsorted input is handled.
        let shuffled = [0.9, 0.1, 0.5, 0.3, 0.7];
        assert_eq!(nearest_rank_percentile(&shuffled, 0.05), 0.1);
    }

    #[test]
    fn threshold_learning_and_acceptance_invariant() {
        let (features, labels) = gaussian_clusters(21, 3, 40, 0.4);
        let model = train_identifier(&features, &labels, &TrainConfig::default()).unwrap();
        assert!(model.threshold > 0.0 && model.threshold < 1.0);
        model.validate().unwrap();

        // At least 94% of correctly classified training instances must be
        // accepted with their true identity (the 5th-percentile rule, with
        // slack for rank rounding).
        let mut surviving = 0usize;
        let mut accepted = 0usize;
        for (x, &label) in features.iter().zip(&labels) {
            let (winner, _) = model.classify(x);
            if winner != label {
                continue;
            }
            surviving += 1;
            if let Decision::Accept { identity, confidence } = identify(&model, x) {
                assert_eq!(identity, label);
                assert!(confidence >= model.threshold);
                accepted += 1;
            }
        }
        assert!(surviving > 0);
        let rate = accepted as f64 / surviving as f64;
        assert!(rate >= 0.94, "accept rate {rate} over {surviving} survivors");
    }

    #[test]
    fn identify_boundary_semantics() {
        // Hand-built 2-class model with pass-through normalization and
        // zero weights: softmax is exactly (0.5, 0.5) for any input.
        let passthrough = Normalizer {
            min: [-1.0; N_FEATURES],
            max: [1.0; N_FEATURES],
        };
        let flat = |class_id| SvmModel {
            class_id,
            bias: 0.0,
            weights: [0.0; N_FEATURES],
        };
        let mut model = IdentifierModel {
            n_classes: 2,
            threshold: 0.5,
            normalizer: passthrough,
            models: vec![flat(1), flat(2)],
        };
        let x = vector([0.2; N_FEATURES]);
        // Confidence 0.5 == threshold 0.5 → accept (comparison is strict
        // "lower than" for rejection), tie broken to class 1.
        assert_eq!(
            identify(&model, &x),
            Decision::Accept {
                identity: 1,
                confidence: 0.5
            }
        );
        // Threshold above the confidence → reject.
        model.threshold = 0.6;
        assert_eq!(identify(&model, &x), Decision::Reject);
    }

    #[test]
    fn degenerate_threshold_is_an_error() {
        // Force misclassification of every instance by mislabeling after
        // training would be contrived; instead calibrate against wrong
        // labels directly.
        let (features, labels) = gaussian_clusters(31, 2, 10, 0.2);
        let normalizer = crate::features::fit_normalizer(&features).unwrap();
        let normalized: Vec<FeatureVector> = features
            .iter()
            .map(|f| normalize(f, &normalizer))
            .collect();
        let models = train_one_vs_all(&normalized, &labels, &TrainConfig::default()).unwrap();
        let wrong: Vec<u32> = labels.iter().map(|&l| if l == 1 { 2 } else { 1 }).collect();
        assert!(matches!(
            learn_threshold(&models, &normalized, &wrong),
            Err(Error::DegenerateModel(_))
        ));
    }

    #[test]
    fn model_json_layout_and_round_trip() {
        let (features, labels) = gaussian_clusters(41, 2, 12, 0.3);
        let model = train_identifier(&features, &labels, &TrainConfig::default()).unwrap();
        let json = model.to_json().unwrap();
        // Field order is part of the interchange contract.
        let n_pos = json.find("\"n_classes\"").unwrap();
        let t_pos = json.find("\"threshold\"").unwrap();
        let norm_pos = json.find("\"normalizer\"").unwrap();
        let models_pos = json.find("\"models\"").unwrap();
        assert!(n_pos < t_pos && t_pos < norm_pos && norm_pos < models_pos);
        let c_pos = json.find("\"class_id\"").unwrap();
        let b_pos = json.find("\"bias\"").unwrap();
        let w_pos = json.find("\"weights\"").unwrap();
        assert!(c_pos < b_pos && b_pos < w_pos);

        let back = IdentifierModel::from_json(&json).unwrap();
        assert_eq!(back, model, "full-precision round trip");
    }

    #[test]
    fn malformed_models_fail_validation() {
        let (features, labels) = gaussian_clusters(41, 2, 12, 0.3);
        let good = train_identifier(&features, &labels, &TrainConfig::default()).unwrap();

        let mut wrong_count = good.clone();
        wrong_count.n_classes = 3;
        assert!(wrong_count.validate().is_err());

        let mut wrong_order = good.clone();
        wrong_order.models.swap(0, 1);
        assert!(wrong_order.validate().is_err());

        let mut bad_threshold = good.clone();
        bad_threshold.threshold = 1.5;
        assert!(bad_threshold.validate().is_err());

        let mut nan_weights = good;
        nan_weights.models[0].weights[7] = f64::NAN;
        assert!(nan_weights.validate().is_err());
    }

    #[test]
    fn svr_constant_targets() {
        let (features, _) = gaussian_clusters(51, 2, 15, 0.5);
        let targets = vec![0.37f64; features.len()];
        let model = train_svr(
            &features,
            &targets,
            SVR_DEFAULT_EPSILON,
            &TrainConfig::default(),
        )
        .unwrap();
        for x in &features {
            let p = predict_svr(&model, x);
            assert!(
                (p - 0.37).abs() <= SVR_DEFAULT_EPSILON + 1e-6,
                "prediction {p}"
            );
        }
    }

    #[test]
    fn svr_recovers_linear_target() {
        let mut rng = derive_rng(99, &[7]);
        let features: Vec<FeatureVector> = (0..60)
            .map(|_| {
                let mut v = [0.0; N_FEATURES];
                for slot in &mut v {
                    *slot = rng.random_range(-1.0f64..1.0);
                }
                vector(v)
            })
            .collect();
        let targets: Vec<f64> = features.iter().map(|f| 3.0 * f.values[0] - 1.0).collect();
        // Held-out points from the same law.
        let test: Vec<FeatureVector> = (0..40)
            .map(|_| {
                let mut v = [0.0; N_FEATURES];
                for slot in &mut v {
                    *slot = rng.random_range(-1.0f64..1.0);
                }
                vector(v)
            })
            .collect();
        let test_targets: Vec<f64> = test.iter().map(|f| 3.0 * f.values[0] - 1.0).collect();
        let mean_t = test_targets.iter().sum::<f64>() / test_targets.len() as f64;
        let r_squared = |model: &SvrModel| {
            let mut ss_res = 0.0;
            let mut ss_tot = 0.0;
            for (x, &t) in test.iter().zip(&test_targets) {
                let p = predict_svr(model, x);
                ss_res += (p - t) * (p - t);
                ss_tot += (t - mean_t) * (t - mean_t);
            }
            1.0 - ss_res / ss_tot
        };

        // At the default C the ridge term shrinks the slope a few
        // percent; with a larger C the law is recovered almost exactly.
        let default_fit = train_svr(
            &features,
            &targets,
            SVR_DEFAULT_EPSILON,
            &TrainConfig::default(),
        )
        .unwrap();
        let r2 = r_squared(&default_fit);
        assert!(r2 >= 0.98, "default C: R² = {r2}");

        let strong_fit = train_svr(
            &features,
            &targets,
            SVR_DEFAULT_EPSILON,
            &TrainConfig {
                c: 10.0,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let r2 = r_squared(&strong_fit);
        assert!(r2 >= 0.999, "C = 10: R² = {r2}");
    }

    #[test]
    fn svr_input_validation() {
        let (features, _) = gaussian_clusters(61, 2, 5, 0.3);
        let cfg = TrainConfig::default();
        assert!(matches!(
            train_svr(&features, &[1.0], 0.01, &cfg),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            train_svr(&features[..1], &[1.0], 0.01, &cfg),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            train_svr(&features, &vec![f64::NAN; features.len()], 0.01, &cfg),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            train_svr(&features, &vec![0.0; features.len()], -0.1, &cfg),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                c: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                tolerance: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                max_epochs: 0,
                ..TrainConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
