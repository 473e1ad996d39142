use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train_rows, ClassifyError, Hyperparams, ModelKind};
use crate::corpus::Label;
use crate::evaluation::{Confusion, EvaluationReport};
use crate::features::FeatureMatrix;

/// Fold index for every sample. Each class is shuffled and dealt round-robin,
/// the next class starting where the previous one stopped, so per-class fold
/// counts differ by at most one and fold sizes stay balanced.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>, ClassifyError> {
    if k < 2 || k > labels.len() {
        return Err(ClassifyError::Folds { k, n: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for class in [Label::Hate, Label::Normal] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<EvaluationReport>,
    pub mean_accuracy: f64,
    /// Population standard deviation over folds.
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    /// Metrics over the summed fold confusions.
    pub pooled: EvaluationReport,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl CvReport {
    pub fn from_folds(folds: Vec<EvaluationReport>) -> Self {
        let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
        let f1: Vec<f64> = folds.iter().map(|f| f.macro_f1).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        let (mean_macro_f1, std_macro_f1) = mean_std(&f1);
        let mut total = Confusion::default();
        for f in &folds {
            total.add(&f.confusion);
        }
        Self {
            k: folds.len(),
            folds,
            mean_accuracy,
            std_accuracy,
            mean_macro_f1,
            std_macro_f1,
            pooled: EvaluationReport::from_confusion(total),
        }
    }
}

/// Stratified k-fold cross-validation of one hyperparameter point over rows.
pub fn cross_validate_rows(
    x: &[Vec<f64>],
    y: &[Label],
    flag_count: usize,
    kind: ModelKind,
    hp: &Hyperparams,
    k: usize,
    seed: u64,
) -> Result<CvReport, ClassifyError> {
    let folds = stratified_folds(y, k, seed)?;
    let mut reports = Vec::with_capacity(k);
    for f in 0..k {
        let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
        for (i, &fi) in folds.iter().enumerate() {
            if fi == f {
                vx.push(&x[i]);
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        let m = train_rows(&tx, &ty, flag_count, "", kind, hp)?;
        let mut c = Confusion::default();
        for (xi, &gold) in vx.iter().zip(&vy) {
            let pred = m.predict(xi)?;
            match (pred.is_hate(), gold.is_hate()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        reports.push(EvaluationReport::from_confusion(c));
    }
    Ok(CvReport::from_folds(reports))
}

pub fn cross_validate(
    matrix: &FeatureMatrix,
    kind: ModelKind,
    hp: &Hyperparams,
    k: usize,
    seed: u64,
) -> Result<CvReport, ClassifyError> {
    let y = matrix.labels.as_ref().ok_or(ClassifyError::Unlabeled)?;
    cross_validate_rows(&matrix.design(), y, matrix.flag_count(), kind, hp, k, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointOutcome {
    Ok(CvReport),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparams: Hyperparams,
    pub outcome: PointOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub kind: ModelKind,
    pub best: Hyperparams,
    pub best_index: usize,
    pub points: Vec<GridPoint>,
}

/// Cross-validates every grid point with the same folds. The best point has
/// the highest mean macro-F1; ties go to the lower `l2_lambda`, then the lower
/// `learning_rate`. A failing point is recorded, not fatal, unless all fail.
pub fn grid_search(
    matrix: &FeatureMatrix,
    kind: ModelKind,
    grid: &[Hyperparams],
    k: usize,
    seed: u64,
) -> Result<GridResult, ClassifyError> {
    if grid.is_empty() {
        return Err(ClassifyError::EmptyGrid);
    }
    let y = matrix.labels.as_ref().ok_or(ClassifyError::Unlabeled)?;
    let x = matrix.design();
    let points: Vec<GridPoint> = grid
        .iter()
        .map(|hp| GridPoint {
            hyperparams: *hp,
            outcome: match cross_validate_rows(&x, y, matrix.flag_count(), kind, hp, k, seed) {
                Ok(r) => PointOutcome::Ok(r),
                Err(e) => PointOutcome::Failed(e.to_string()),
            },
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let PointOutcome::Ok(r) = &p.outcome else { continue };
        let better = match best {
            None => true,
            Some((bi, bf)) => {
                let (a, b) = (&p.hyperparams, &points[bi].hyperparams);
                r.mean_macro_f1 > bf
                    || (r.mean_macro_f1 == bf
                        && (a.l2_lambda, a.learning_rate) < (b.l2_lambda, b.learning_rate))
            }
        };
        if better {
            best = Some((i, r.mean_macro_f1));
        }
    }
    match best {
        Some((best_index, _)) => Ok(GridResult {
            kind,
            best: points[best_index].hyperparams,
            best_index,
            points,
        }),
        None => {
            let causes: Vec<String> = points
                .iter()
                .enumerate()
                .map(|(i, p)| match &p.outcome {
                    PointOutcome::Failed(e) => format!("point {i}: {e}"),
                    PointOutcome::Ok(_) => unreachable!(),
                })
                .collect();
            Err(ClassifyError::AllPointsFailed(causes.join("; ")))
        }
    }
}
