//! Logistic regression and linear SVM trained by mini-batch gradient descent.
//!
//! Both minimize `mean(loss) + (lambda / 2) * |w|^2`; the bias is not
//! regularized. Labels map to `y = +1` for hate and `-1` for normal.

mod cv;

pub use cv::{
    cross_validate, grid_search, stratified_folds, CvReport, GridPoint, GridResult, PointOutcome,
};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::features::FeatureMatrix;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training data has a single class ({0})")]
    SingleClass(Label),
    #[error("training data is empty")]
    Empty,
    #[error("feature matrix has no labels")]
    Unlabeled,
    #[error("row {0}: non-finite feature value")]
    NonFinite(usize),
    #[error("feature length {found} does not match the model's {expected}")]
    Width { expected: usize, found: usize },
    #[error("lexicon fingerprint {found} does not match the model's {expected}; re-featurize and retrain")]
    Fingerprint { expected: String, found: String },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("k = {k} folds is invalid for {n} samples")]
    Folds { k: usize, n: usize },
    #[error("every grid point failed: {0}")]
    AllPointsFailed(String),
    #[error("empty grid")]
    EmptyGrid,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logistic,
    LinearSvm,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(Self::Logistic),
            "linear-svm" | "svm" => Ok(Self::LinearSvm),
            other => Err(format!("unknown model kind {other:?} (logistic, linear-svm)")),
        }
    }
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-2,
            learning_rate: 0.1,
            epochs: 50,
            seed: 0,
            batch_size: default_batch(),
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: &str| Err(ClassifyError::Hyperparams(m.into()));
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

/// Grid over `l2_lambda × learning_rate` sharing epochs, seed and batch size.
pub fn default_grid(seed: u64) -> Vec<Hyperparams> {
    let mut g = Vec::new();
    for l2_lambda in [1e-4, 1e-2, 1.0] {
        for learning_rate in [0.1, 0.01] {
            g.push(Hyperparams {
                l2_lambda,
                learning_rate,
                epochs: 50,
                seed,
                batch_size: default_batch(),
            });
        }
    }
    g
}

/// Per-feature affine map for the dense block; flags pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub flag_count: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(rows: &[Vec<f64>], flag_count: usize) -> Self {
        let width = rows.first().map_or(flag_count, Vec::len);
        let d = width - flag_count;
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(&r[flag_count..]) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(&r[flag_count..]) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        Self { flag_count, mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        for (j, x) in out[self.flag_count..].iter_mut().enumerate() {
            *x = (*x - self.mean[j]) / self.scale[j];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub final_loss: f64,
    /// Regularized objective after each epoch.
    pub loss_curve: Vec<f64>,
    /// Epochs rolled back because the objective rose; each halves the step.
    pub rollbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub dims: usize,
    pub fingerprint: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Standardization,
    pub hyperparams: Hyperparams,
    pub training_report: TrainingReport,
}

fn sign(label: Label) -> f64 {
    if label.is_hate() {
        1.0
    } else {
        -1.0
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-m))` without overflow.
fn log_loss(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

fn sample_loss(kind: ModelKind, margin: f64) -> f64 {
    match kind {
        ModelKind::Logistic => log_loss(margin),
        ModelKind::LinearSvm => (1.0 - margin).max(0.0),
    }
}

/// d loss / d z for a sample with label sign `y`; the hinge kink at margin 1
/// takes the zero branch.
fn loss_slope(kind: ModelKind, y: f64, z: f64) -> f64 {
    let margin = y * z;
    match kind {
        ModelKind::Logistic => -y * sigmoid(-margin),
        ModelKind::LinearSvm => {
            if margin < 1.0 {
                -y
            } else {
                0.0
            }
        }
    }
}

/// Regularized training objective at `(w, b)`.
pub fn objective(kind: ModelKind, w: &[f64], b: f64, x: &[Vec<f64>], y: &[Label], lambda: f64) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| sample_loss(kind, sign(yi) * (dot(w, xi) + b)))
        .sum();
    data / n + 0.5 * lambda * dot(w, w)
}

/// Gradient of [`objective`] with respect to `w` and `b`.
pub fn gradient(
    kind: ModelKind,
    w: &[f64],
    b: f64,
    x: &[Vec<f64>],
    y: &[Label],
    lambda: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let s = loss_slope(kind, sign(yi), dot(w, xi) + b);
        if s != 0.0 {
            for (g, v) in gw.iter_mut().zip(xi) {
                *g += s * v;
            }
            gb += s;
        }
    }
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wj;
    }
    (gw, gb / n)
}

fn check_rows(x: &[Vec<f64>], y: &[Label]) -> Result<(), ClassifyError> {
    if x.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if let Some(i) = x.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(ClassifyError::NonFinite(i));
    }
    let hate = y.iter().filter(|l| l.is_hate()).count();
    if hate == 0 {
        return Err(ClassifyError::SingleClass(Label::Normal));
    }
    if hate == y.len() {
        return Err(ClassifyError::SingleClass(Label::Hate));
    }
    Ok(())
}

/// Trains on explicit rows. Each epoch shuffles with the seeded generator and
/// takes proximal L2 steps `w <- (w - lr * g) / (1 + lr * lambda)`. An epoch
/// that raises the objective is rolled back and the step size halved.
pub fn train_rows(
    x: &[Vec<f64>],
    y: &[Label],
    flag_count: usize,
    fingerprint: &str,
    kind: ModelKind,
    hp: &Hyperparams,
) -> Result<LinearModel, ClassifyError> {
    hp.validate()?;
    if x.len() != y.len() {
        return Err(ClassifyError::Width {
            expected: x.len(),
            found: y.len(),
        });
    }
    check_rows(x, y)?;
    let dims = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != dims) {
        return Err(ClassifyError::Width {
            expected: dims,
            found: r.len(),
        });
    }
    let standardization = Standardization::fit(x, flag_count);
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardization.apply(r)).collect();
    let ys: Vec<f64> = y.iter().map(|&l| sign(l)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut w = vec![0.0; dims];
    let mut b = 0.0;
    let mut lr = hp.learning_rate;
    let mut current = objective(kind, &w, b, &z, y, hp.l2_lambda);
    let mut curve = Vec::with_capacity(hp.epochs);
    let mut rollbacks = 0;
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut gw = vec![0.0; dims];
    for _ in 0..hp.epochs {
        let (w0, b0) = (w.clone(), b);
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for &i in batch {
                let s = loss_slope(kind, ys[i], dot(&w, &z[i]) + b);
                if s != 0.0 {
                    for (g, v) in gw.iter_mut().zip(&z[i]) {
                        *g += s * v;
                    }
                    gb += s;
                }
            }
            let m = batch.len() as f64;
            let shrink = 1.0 + lr * hp.l2_lambda;
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj = (*wj - lr * g / m) / shrink;
            }
            b -= lr * gb / m;
        }
        let next = objective(kind, &w, b, &z, y, hp.l2_lambda);
        if next > current {
            w = w0;
            b = b0;
            lr *= 0.5;
            rollbacks += 1;
        } else {
            current = next;
        }
        curve.push(current);
    }
    Ok(LinearModel {
        kind,
        dims,
        fingerprint: fingerprint.to_string(),
        weights: w,
        bias: b,
        standardization,
        hyperparams: *hp,
        training_report: TrainingReport {
            final_loss: current,
            loss_curve: curve,
            rollbacks,
        },
    })
}

pub fn train(matrix: &FeatureMatrix, kind: ModelKind, hp: &Hyperparams) -> Result<LinearModel, ClassifyError> {
    let labels = matrix.labels.as_ref().ok_or(ClassifyError::Unlabeled)?;
    train_rows(&matrix.design(), labels, matrix.flag_count(), &matrix.fingerprint, kind, hp)
}

impl LinearModel {
    /// Sigmoid probability for logistic models, raw margin for SVMs.
    pub fn predict_score(&self, features: &[f64]) -> Result<f64, ClassifyError> {
        if features.len() != self.dims {
            return Err(ClassifyError::Width {
                expected: self.dims,
                found: features.len(),
            });
        }
        let z = dot(&self.weights, &self.standardization.apply(features)) + self.bias;
        Ok(match self.kind {
            ModelKind::Logistic => sigmoid(z),
            ModelKind::LinearSvm => z,
        })
    }

    pub fn label_for(&self, score: f64) -> Label {
        let hate = match self.kind {
            ModelKind::Logistic => score >= 0.5,
            ModelKind::LinearSvm => score >= 0.0,
        };
        if hate {
            Label::Hate
        } else {
            Label::Normal
        }
    }

    pub fn predict(&self, features: &[f64]) -> Result<Label, ClassifyError> {
        Ok(self.label_for(self.predict_score(features)?))
    }

    pub fn check_fingerprint(&self, fingerprint: &str) -> Result<(), ClassifyError> {
        if fingerprint == self.fingerprint {
            Ok(())
        } else {
            Err(ClassifyError::Fingerprint {
                expected: self.fingerprint.clone(),
                found: fingerprint.to_string(),
            })
        }
    }

    /// Scores every row after checking the matrix was built from the same
    /// frozen lexicon.
    pub fn score_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<(Label, f64)>, ClassifyError> {
        self.check_fingerprint(&matrix.fingerprint)?;
        matrix
            .rows
            .iter()
            .map(|r| {
                let s = self.predict_score(&r.values())?;
                Ok((self.label_for(s), s))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        crate::lexicon::write_atomically(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        let text = std::fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| ClassifyError::Parse(e.to_string()))?;
        if m.weights.len() != m.dims {
            return Err(ClassifyError::Parse(format!(
                "{} weights for {} dims",
                m.weights.len(),
                m.dims
            )));
        }
        Ok(m)
    }
}
