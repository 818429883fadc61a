//! Classification metrics: confusion matrix, macro precision/recall/F1 and
//! one-vs-rest ROC curves.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::ActivityClass;
use crate::NUM_CLASSES;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {preds} predictions vs {truth} labels")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("ROC needs positive and negative samples, got {positives} positives and {negatives} negatives")]
    DegenerateRoc { positives: usize, negatives: usize },
}

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_indices(preds: &[usize], truth: &[usize], classes: usize) -> Result<Self, MetricsError> {
        if preds.len() != truth.len() {
            return Err(MetricsError::LengthMismatch {
                preds: preds.len(),
                truth: truth.len(),
            });
        }
        if preds.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut cm = Self::new(classes);
        for (&p, &t) in preds.iter().zip(truth) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<(), MetricsError> {
        for index in [truth, pred] {
            if index >= self.classes {
                return Err(MetricsError::ClassOutOfRange {
                    index,
                    classes: self.classes,
                });
            }
        }
        self.counts[truth * self.classes + pred] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes).map(<[u64]>::to_vec).collect()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, pred)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Diagonal over row sum; 0 for classes with no samples.
    pub fn per_class_accuracy(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|c| ratio(self.get(c, c), self.row_sum(c)))
            .collect()
    }

    /// Largest off-diagonal cell as `(truth, pred, count)`; first in row-major
    /// order on ties.
    pub fn largest_off_diagonal(&self) -> Option<(usize, usize, u64)> {
        let mut best: Option<(usize, usize, u64)> = None;
        for t in 0..self.classes {
            for p in 0..self.classes {
                let n = self.get(t, p);
                if t != p && best.is_none_or(|b| n > b.2) {
                    best = Some((t, p, n));
                }
            }
        }
        best
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// 6-class confusion matrix from class predictions.
pub fn confusion(preds: &[ActivityClass], truth: &[ActivityClass]) -> Result<ConfusionMatrix, MetricsError> {
    let p: Vec<usize> = preds.iter().map(|c| c.index()).collect();
    let t: Vec<usize> = truth.iter().map(|c| c.index()).collect();
    ConfusionMatrix::from_indices(&p, &t, NUM_CLASSES)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    /// Harmonic mean of the macro precision and macro recall.
    pub f1: f64,
    /// Unweighted mean of the per-class F1 scores.
    pub mean_class_f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    /// Set when some class was never predicted, so its precision was taken
    /// as 0.
    pub zero_division: bool,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn macro_prf(cm: &ConfusionMatrix) -> Result<MacroScores, MetricsError> {
    if cm.classes == 0 || cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let k = cm.classes;
    let mut zero_division = false;
    let per_class_precision: Vec<f64> = (0..k)
        .map(|c| {
            let col = cm.col_sum(c);
            zero_division |= col == 0;
            ratio(cm.get(c, c), col)
        })
        .collect();
    let per_class_recall: Vec<f64> = (0..k).map(|c| ratio(cm.get(c, c), cm.row_sum(c))).collect();
    let precision = per_class_precision.iter().sum::<f64>() / k as f64;
    let recall = per_class_recall.iter().sum::<f64>() / k as f64;
    let mean_class_f1 = per_class_precision
        .iter()
        .zip(&per_class_recall)
        .map(|(&p, &r)| harmonic(p, r))
        .sum::<f64>()
        / k as f64;
    Ok(MacroScores {
        precision,
        recall,
        f1: harmonic(precision, recall),
        mean_class_f1,
        per_class_precision,
        per_class_recall,
        zero_division,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC of a binary scoring; equal scores enter the sweep as one threshold.
pub fn roc_binary(scores: &[f64], positive: &[bool]) -> Result<RocCurve, MetricsError> {
    if scores.len() != positive.len() {
        return Err(MetricsError::LengthMismatch {
            preds: scores.len(),
            truth: positive.len(),
        });
    }
    let positives = positive.iter().filter(|&&p| p).count();
    let negatives = positive.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateRoc {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let (pos, neg) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&s) == Ordering::Equal {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x1, y1) = (fp as f64 / neg, tp as f64 / pos);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

/// One-vs-rest ROC for `class` from per-sample class probabilities.
pub fn roc_curve(scores: &[Vec<f64>], truth: &[usize], class: usize) -> Result<RocCurve, MetricsError> {
    let s: Vec<f64> = scores.iter().map(|p| p[class]).collect();
    let pos: Vec<bool> = truth.iter().map(|&t| t == class).collect();
    roc_binary(&s, &pos)
}

/// Index of the largest score; the first one on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub macro_scores: MacroScores,
    pub confusion: ConfusionMatrix,
    /// `None` for classes without both positive and negative samples.
    pub roc: Vec<Option<RocCurve>>,
}

/// Builds every metric from per-sample class probabilities.
pub fn evaluate_scores(scores: &[Vec<f64>], truth: &[usize], classes: usize) -> Result<EvalReport, MetricsError> {
    let preds: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let confusion = ConfusionMatrix::from_indices(&preds, truth, classes)?;
    let macro_scores = macro_prf(&confusion)?;
    let roc = (0..classes)
        .map(|c| match roc_curve(scores, truth, c) {
            Ok(curve) => Ok(Some(curve)),
            Err(MetricsError::DegenerateRoc { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;
    Ok(EvalReport {
        samples: truth.len(),
        accuracy: confusion.accuracy(),
        per_class_accuracy: confusion.per_class_accuracy(),
        macro_scores,
        confusion,
        roc,
    })
}
