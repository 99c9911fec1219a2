//! Exploratory summaries: moments, Pearson correlations and the monthly aod table.

use serde::{Deserialize, Serialize};

use super::schema::{Dataset, FeatureKind, FEATURE_NAMES, N_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    /// Biased Fisher-Pearson g1; `None` for a constant feature.
    pub skewness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityMonthlyAod {
    pub city: String,
    /// Mean aod for January..December; `None` where no observation exists.
    pub monthly_mean: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaSummary {
    pub features: Vec<FeatureStats>,
    pub correlation_features: Vec<String>,
    /// Symmetric Pearson matrix; `None` marks entries involving a zero-variance feature.
    pub correlation: Vec<Vec<Option<f64>>>,
    pub monthly_aod: Vec<CityMonthlyAod>,
}

impl EdaSummary {
    pub fn feature(&self, name: &str) -> Option<&FeatureStats> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn correlation_between(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.correlation_features.iter().position(|f| f == a)?;
        let j = self.correlation_features.iter().position(|f| f == b)?;
        self.correlation[i][j]
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population central moments `(m2, m3)`.
fn central_moments(values: &[f64]) -> (f64, f64) {
    let mu = mean(values);
    let n = values.len() as f64;
    let (s2, s3) = values.iter().fold((0.0, 0.0), |(s2, s3), &v| {
        let d = v - mu;
        (s2 + d * d, s3 + d * d * d)
    });
    (s2 / n, s3 / n)
}

/// `m3 / m2^1.5` over population moments.
pub fn skewness(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let (m2, m3) = central_moments(values);
    (m2 > 0.0).then(|| m3 / m2.powf(1.5))
}

/// Pearson r over pairs where both values are finite.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn eda_summary(dataset: &Dataset) -> Result<EdaSummary> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let rows = dataset.raw_rows();
    let columns: Vec<Vec<f64>> = (0..N_FEATURES)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();

    let features = columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let present: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
            let (mean_v, std_dev, skew) = if present.is_empty() {
                (f64::NAN, f64::NAN, None)
            } else {
                let (m2, _) = central_moments(&present);
                (mean(&present), m2.sqrt(), skewness(&present))
            };
            FeatureStats {
                name: FEATURE_NAMES[j].to_string(),
                count: present.len(),
                mean: mean_v,
                std_dev,
                skewness: skew,
            }
        })
        .collect();

    let continuous: Vec<usize> = dataset
        .schema
        .features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind == FeatureKind::Continuous)
        .map(|(j, _)| j)
        .collect();
    let correlation = continuous
        .iter()
        .map(|&a| {
            continuous
                .iter()
                .map(|&b| {
                    let r = pearson(&columns[a], &columns[b]);
                    if a == b {
                        r.map(|_| 1.0)
                    } else {
                        r
                    }
                })
                .collect()
        })
        .collect();

    let monthly_aod = dataset
        .cities()
        .into_iter()
        .map(|city| {
            let mut sums = [0.0; 12];
            let mut counts = [0usize; 12];
            for r in dataset.records().iter().filter(|r| r.city == city) {
                if let Some(aod) = r.aod {
                    sums[r.month as usize - 1] += aod;
                    counts[r.month as usize - 1] += 1;
                }
            }
            CityMonthlyAod {
                city: city.to_string(),
                monthly_mean: sums
                    .iter()
                    .zip(counts)
                    .map(|(s, c)| (c > 0).then(|| s / c as f64))
                    .collect(),
            }
        })
        .collect();

    Ok(EdaSummary {
        features,
        correlation_features: continuous
            .iter()
            .map(|&j| FEATURE_NAMES[j].to_string())
            .collect(),
        correlation,
        monthly_aod,
    })
}
