use serde::{Deserialize, Serialize};

use super::tree::Tree;
use crate::dataset::N_FEATURES;
use crate::error::{Error, Result};

/// Per-class additive tree sequences over a shared base margin.
///
/// The margin of class `c` is `base_score` plus the routed leaf weight of
/// every tree in `trees[c]`, summed in round order. Leaf weights already
/// carry the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    pub n_classes: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub base_score: f64,
    pub trees: Vec<Vec<Tree>>,
}

impl GbtEnsemble {
    pub fn empty(n_classes: usize, learning_rate: f64) -> Self {
        GbtEnsemble {
            n_classes,
            rounds: 0,
            learning_rate,
            base_score: 0.0,
            trees: vec![Vec::new(); n_classes],
        }
    }

    pub(crate) fn class_margin(&self, class: usize, row: &[f64]) -> f64 {
        let mut m = self.base_score;
        for tree in &self.trees[class] {
            m += tree.predict(row);
        }
        m
    }

    pub(crate) fn margins_unchecked(&self, row: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| self.class_margin(c, row))
            .collect()
    }

    pub fn predict_margins(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_arity(row)?;
        Ok(self.margins_unchecked(row))
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.predict_margins(row)?))
    }

    /// Arg-max class; ties resolve to the lowest class id.
    pub fn predict_class(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(row)?))
    }

    /// Structural checks run after deserialisation.
    pub fn validate(&self) -> Result<()> {
        if self.trees.len() != self.n_classes || self.n_classes == 0 {
            return Err(Error::Schema(format!(
                "ensemble declares {} classes but holds {} tree lists",
                self.n_classes,
                self.trees.len()
            )));
        }
        for (c, list) in self.trees.iter().enumerate() {
            if list.len() != self.rounds {
                return Err(Error::Schema(format!(
                    "class {c} has {} trees, expected {}",
                    list.len(),
                    self.rounds
                )));
            }
            if let Some(i) = list.iter().position(|t| !t.is_valid()) {
                return Err(Error::Schema(format!("class {c} tree {i} is malformed")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_arity(row: &[f64]) -> Result<()> {
    if row.len() != N_FEATURES {
        return Err(Error::Shape {
            expected: N_FEATURES,
            got: row.len(),
        });
    }
    Ok(())
}

/// Softmax with max subtraction.
pub fn softmax(margins: &[f64]) -> Vec<f64> {
    let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = margins.iter().map(|m| (m - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
