use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use crate::cluster::{KMeansModel, ProxyLabeling};
use crate::dataset::{write_csv, Dataset, FeatureSchema, N_FEATURES};
use crate::error::{Error, Result};
use crate::gbt::{evaluate, EvalReport, GbtEnsemble};
use crate::index::{
    compute_sci, rank_sites, BinThresholds, CompositeWeights, SiteRanking, SuitabilityResult,
};
use crate::preprocess::{adjust_row, interpolate_missing, Row, ScalingParams};
use crate::shap::{BackgroundSet, ImportanceTable, ShapAttribution, ShapPlan};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    /// SHA-256 of the canonical CSV rendering of the training dataset.
    pub dataset_fingerprint: String,
    pub records: usize,
    pub cities: Vec<String>,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub config: PipelineConfig,
}

/// Everything needed to score, explain and index new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub version: u32,
    pub schema: FeatureSchema,
    pub scaler: ScalingParams,
    pub kmeans: KMeansModel,
    pub proxy: ProxyLabeling,
    pub ensemble: GbtEnsemble,
    pub background: BackgroundSet,
    pub importance: ImportanceTable,
    pub weights: CompositeWeights,
    pub thresholds: BinThresholds,
    pub metadata: TrainingMetadata,
}

/// Per-record output of [`ModelBundle::score_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub city: String,
    pub date: NaiveDate,
    pub proxy_class: usize,
    pub proxy_label: String,
    pub sci: f64,
    pub sci_class: usize,
    pub sci_label: String,
}

pub fn dataset_fingerprint(dataset: &Dataset) -> String {
    let digest = Sha256::digest(write_csv(dataset).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ModelBundle {
    /// Raw row to (scaled, adjusted) rows.
    pub fn prepare(&self, raw: &Row) -> (Row, Row) {
        let scaled = self.scaler.scale_row(raw);
        (scaled, adjust_row(&scaled, &self.schema))
    }

    pub fn sci(&self, adjusted: &Row) -> SuitabilityResult {
        compute_sci(adjusted, &self.weights, &self.thresholds)
    }

    /// Shapley attributions of a scaled row for every class.
    pub fn explain_scaled(&self, scaled: &Row) -> Result<Vec<ShapAttribution>> {
        let plan = ShapPlan::new(&self.ensemble);
        (0..self.ensemble.n_classes)
            .map(|c| plan.explain(scaled, &self.background, c))
            .collect()
    }

    /// Fills gaps and scales every record of `dataset`.
    fn scaled_rows(&self, dataset: &Dataset) -> Result<(Dataset, Vec<Row>)> {
        let filled = interpolate_missing(dataset)?;
        let rows = filled
            .raw_rows()
            .iter()
            .map(|r| self.scaler.scale_row(r))
            .collect();
        Ok((filled, rows))
    }

    /// Proxy class of each scaled row according to the stored clustering.
    pub fn proxy_classes(&self, scaled: &[Row]) -> Vec<usize> {
        scaled
            .iter()
            .map(|r| self.proxy.class_of(self.kmeans.nearest(r)))
            .collect()
    }

    /// Scores the ensemble against the clustering's proxy classes.
    pub fn evaluate_dataset(&self, dataset: &Dataset) -> Result<EvalReport> {
        let (_, scaled) = self.scaled_rows(dataset)?;
        evaluate(&self.ensemble, &scaled, &self.proxy_classes(&scaled))
    }

    pub fn score_dataset(&self, dataset: &Dataset) -> Result<Vec<RecordScore>> {
        let (filled, scaled) = self.scaled_rows(dataset)?;
        filled
            .records()
            .iter()
            .zip(&scaled)
            .map(|(rec, s)| {
                let proxy_class = self.ensemble.predict_class(s)?;
                let r = self.sci(&adjust_row(s, &self.schema));
                Ok(RecordScore {
                    city: rec.city.clone(),
                    date: rec.date,
                    proxy_class,
                    proxy_label: self.proxy.label(proxy_class).to_string(),
                    sci: r.sci,
                    sci_class: r.class,
                    sci_label: r.label,
                })
            })
            .collect()
    }

    pub fn rank_dataset(&self, dataset: &Dataset) -> Result<Vec<SiteRanking>> {
        let (filled, scaled) = self.scaled_rows(dataset)?;
        let results: Vec<SuitabilityResult> = scaled
            .iter()
            .map(|s| self.sci(&adjust_row(s, &self.schema)))
            .collect();
        Ok(rank_sites(
            filled
                .records()
                .iter()
                .map(|r| r.city.as_str())
                .zip(&results),
        ))
    }

    /// Cross-component consistency checks run after loading.
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        self.ensemble.validate()?;
        self.weights.validate()?;
        let k = self.kmeans.k;
        let shape_ok = self.kmeans.centroids.len() == k
            && self.proxy.n_classes() == k
            && self.ensemble.n_classes == k
            && self.scaler.min.len() == N_FEATURES
            && self.scaler.max.len() == N_FEATURES
            && self.scaler.degenerate.len() == N_FEATURES
            && self.weights.weights.len() == N_FEATURES
            && !self.background.is_empty();
        if !shape_ok {
            return Err(Error::Schema(
                "bundle components disagree on class or feature counts".into(),
            ));
        }
        let mut seen = vec![false; k];
        for &c in &self.proxy.cluster_to_class {
            if c >= k || std::mem::replace(&mut seen[c], true) {
                return Err(Error::Schema(
                    "proxy labeling is not a permutation of the clusters".into(),
                ));
            }
        }
        Ok(())
    }

    /// Canonical JSON: sorted keys, two-space indent, trailing newline.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("bundle serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("bundle: {e}")))?;
        let version = value
            .get("version")
            .ok_or_else(|| Error::Schema("bundle: missing `version`".into()))?;
        let version = version
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| Error::Schema(format!("bundle: `version` is {version}")))?;
        if version != BUNDLE_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: BUNDLE_VERSION,
            });
        }
        let bundle: ModelBundle = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::Schema(format!("bundle at `{path}`: {}", e.into_inner()))
        })?;
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    std::fs::write(path, bundle.to_json())?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    ModelBundle::from_json(&std::fs::read_to_string(path)?)
}
