//! Composite Site Suitability Index: `SCI = Σ w_j · x̂_j` over the
//! direction-adjusted features, binned into five ordinal classes.

use serde::{Deserialize, Serialize};

use crate::cluster::CLASS_LABELS;
use crate::dataset::N_FEATURES;
use crate::error::{Error, Result};
use crate::preprocess::Row;
use crate::shap::ImportanceTable;

pub const N_SCI_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Mean-|SHAP| values used as-is.
    #[default]
    Raw,
    /// Mean-|SHAP| values divided by their total.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights {
    pub mode: WeightMode,
    pub weights: Vec<f64>,
    /// The mean-|SHAP| values the weights came from.
    pub importance: Vec<f64>,
}

impl CompositeWeights {
    pub fn from_importance_values(importance: &[f64], mode: WeightMode) -> Result<Self> {
        if importance.len() != N_FEATURES {
            return Err(Error::Shape {
                expected: N_FEATURES,
                got: importance.len(),
            });
        }
        if importance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parameter(
                "importances must be finite and non-negative".into(),
            ));
        }
        let total: f64 = importance.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateImportance);
        }
        let weights = match mode {
            WeightMode::Raw => importance.to_vec(),
            WeightMode::Normalized => importance.iter().map(|v| v / total).collect(),
        };
        Ok(CompositeWeights {
            mode,
            weights,
            importance: importance.to_vec(),
        })
    }

    pub fn from_table(table: &ImportanceTable, mode: WeightMode) -> Result<Self> {
        Self::from_importance_values(&table.mean_abs_shap, mode)
    }

    /// Largest attainable SCI (every adjusted feature at 1).
    pub fn max_sci(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let again = Self::from_importance_values(&self.importance, self.mode)?;
        if again.weights != self.weights {
            return Err(Error::Schema(
                "weights do not match their importance values".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized weights `w_j = |φ_j| / Σ_k |φ_k|`.
pub fn weights_from_importance(table: &ImportanceTable) -> Result<CompositeWeights> {
    CompositeWeights::from_table(table, WeightMode::Normalized)
}

/// Four strictly ascending cut points; a value on a cut belongs to the upper class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BinThresholds([f64; N_SCI_CLASSES - 1]);

impl BinThresholds {
    pub fn new(cuts: [f64; N_SCI_CLASSES - 1]) -> Result<Self> {
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(format!(
                "bin thresholds must be finite and strictly ascending, got {cuts:?}"
            )));
        }
        Ok(BinThresholds(cuts))
    }

    pub fn cuts(&self) -> [f64; N_SCI_CLASSES - 1] {
        self.0
    }
}

impl Default for BinThresholds {
    fn default() -> Self {
        BinThresholds([2.4, 3.4, 4.4, 5.4])
    }
}

impl TryFrom<[f64; 4]> for BinThresholds {
    type Error = Error;
    fn try_from(cuts: [f64; 4]) -> Result<Self> {
        BinThresholds::new(cuts)
    }
}

impl From<BinThresholds> for [f64; 4] {
    fn from(t: BinThresholds) -> Self {
        t.0
    }
}

/// Class id in `0..5`. NaN falls in the lowest class.
pub fn bin_sci(value: f64, thresholds: &BinThresholds) -> usize {
    thresholds.0.iter().filter(|&&t| value >= t).count()
}

pub fn sci_label(class: usize) -> &'static str {
    CLASS_LABELS[class]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuitabilityResult {
    pub sci: f64,
    pub class: usize,
    pub label: String,
    pub contributions: Row,
    pub mode: WeightMode,
}

/// SCI of one adjusted row; `sci` is the in-order sum of `contributions`.
pub fn compute_sci(
    adjusted: &Row,
    weights: &CompositeWeights,
    thresholds: &BinThresholds,
) -> SuitabilityResult {
    let mut contributions = [0.0; N_FEATURES];
    for (j, c) in contributions.iter_mut().enumerate() {
        *c = weights.weights[j] * adjusted[j];
    }
    let sci: f64 = contributions.iter().sum();
    let class = bin_sci(sci, thresholds);
    SuitabilityResult {
        sci,
        class,
        label: sci_label(class).to_string(),
        contributions,
        mode: weights.mode,
    }
}

pub fn class_histogram<'a>(
    results: impl IntoIterator<Item = &'a SuitabilityResult>,
) -> [u64; N_SCI_CLASSES] {
    let mut hist = [0; N_SCI_CLASSES];
    for r in results {
        hist[r.class] += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRanking {
    pub city: String,
    pub mean_sci: f64,
    pub modal_class: usize,
    pub modal_label: String,
    pub histogram: [u64; N_SCI_CLASSES],
    pub records: u64,
}

/// Aggregates per-record results by city, best mean SCI first.
///
/// Equal means order by city name; the modal class breaks ties low.
pub fn rank_sites<'a>(
    scored: impl IntoIterator<Item = (&'a str, &'a SuitabilityResult)>,
) -> Vec<SiteRanking> {
    let mut by_city: Vec<(&str, f64, [u64; N_SCI_CLASSES])> = Vec::new();
    for (city, r) in scored {
        let pos = match by_city.iter().position(|(c, ..)| *c == city) {
            Some(p) => p,
            None => {
                by_city.push((city, 0.0, [0; N_SCI_CLASSES]));
                by_city.len() - 1
            }
        };
        let entry = &mut by_city[pos];
        entry.1 += r.sci;
        entry.2[r.class] += 1;
    }
    let mut ranking: Vec<SiteRanking> = by_city
        .into_iter()
        .map(|(city, total, histogram)| {
            let records: u64 = histogram.iter().sum();
            let modal_class = (0..N_SCI_CLASSES).fold(0, |best, c| {
                if histogram[c] > histogram[best] {
                    c
                } else {
                    best
                }
            });
            SiteRanking {
                city: city.to_string(),
                mean_sci: total / records as f64,
                modal_class,
                modal_label: sci_label(modal_class).to_string(),
                histogram,
                records,
            }
        })
        .collect();
    ranking.sort_by(|a, b| {
        b.mean_sci
            .total_cmp(&a.mean_sci)
            .then_with(|| a.city.cmp(&b.city))
    });
    ranking
}
