use serde::{Deserialize, Serialize};

use super::ensemble::GbtEnsemble;
use crate::error::{Error, Result};
use crate::preprocess::Row;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// No predicted positives; precision reported as 0.
    pub precision_undefined: bool,
    /// No true members; recall reported as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub total: u64,
}

pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<EvalReport> {
    if y_true.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Alignment(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= n_classes) {
        return Err(Error::Parameter(format!(
            "class {bad} outside 0..{n_classes}"
        )));
    }

    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let total = y_true.len() as u64;
    let correct: u64 = (0..n_classes).map(|c| confusion[c][c]).sum();

    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = (0..n_classes).map(|t| confusion[t][c]).sum();
            let precision = if predicted > 0 {
                tp / predicted as f64
            } else {
                0.0
            };
            let recall = if support > 0 {
                tp / support as f64
            } else {
                0.0
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                precision_undefined: predicted == 0,
                recall_undefined: support == 0,
            }
        })
        .collect();

    let k = n_classes as f64;
    let macro_avg = AverageMetrics {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / total as f64
    };
    let weighted_avg = AverageMetrics {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
    };

    Ok(EvalReport {
        confusion,
        per_class,
        accuracy: correct as f64 / total as f64,
        macro_avg,
        weighted_avg,
        total,
    })
}

/// Scores arg-max predictions (ties to the lowest class) against `labels`.
pub fn evaluate(ensemble: &GbtEnsemble, features: &[Row], labels: &[usize]) -> Result<EvalReport> {
    if features.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let predicted = features
        .iter()
        .map(|r| ensemble.predict_class(r))
        .collect::<Result<Vec<_>>>()?;
    classification_report(labels, &predicted, ensemble.n_classes)
}
