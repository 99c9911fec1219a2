use serde::{Deserialize, Serialize};

use crate::cluster::KMeansConfig;
use crate::error::{Error, Result};
use crate::gbt::GbtParams;
use crate::index::{BinThresholds, WeightMode};

/// Every knob of a pipeline run. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub cluster_seed: u64,
    pub kmeans: KMeansConfig,
    pub gbt: GbtParams,
    pub validation_fraction: f64,
    /// Seeds the holdout split; the Shapley background and instance
    /// sample use `seed + 1` and `seed + 2`.
    pub seed: u64,
    pub background_size: usize,
    pub importance_sample: usize,
    pub weight_mode: WeightMode,
    /// Required for normalized weights; defaults to 2.4/3.4/4.4/5.4 for raw.
    pub thresholds: Option<BinThresholds>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_min: 2,
            k_max: 8,
            cluster_seed: 42,
            kmeans: KMeansConfig::default(),
            gbt: GbtParams::default(),
            validation_fraction: 0.2,
            seed: 42,
            background_size: 128,
            importance_sample: 512,
            weight_mode: WeightMode::Raw,
            thresholds: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Schema(format!("config at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(Error::Parameter(format!(
                "k range {}..={} must satisfy 2 <= k_min <= k_max",
                self.k_min, self.k_max
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Parameter(format!(
                "validation_fraction {} must lie in [0, 1)",
                self.validation_fraction
            )));
        }
        if self.background_size == 0 || self.importance_sample == 0 {
            return Err(Error::Parameter(
                "background_size and importance_sample must be positive".into(),
            ));
        }
        if self.weight_mode == WeightMode::Normalized && self.thresholds.is_none() {
            return Err(Error::Parameter(
                "normalized weights need explicit thresholds".into(),
            ));
        }
        Ok(())
    }

    pub fn bin_thresholds(&self) -> BinThresholds {
        self.thresholds.unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let c = PipelineConfig::from_json(r#"{"k_max": 6, "gbt": {"rounds": 30}}"#).unwrap();
        assert_eq!(c.k_max, 6);
        assert_eq!(c.gbt.rounds, 30);
        assert_eq!(c.gbt.max_depth, GbtParams::default().max_depth);
        assert_eq!(c.background_size, 128);
        c.validate().unwrap();
    }

    #[test]
    fn errors_carry_path() {
        let err = PipelineConfig::from_json(r#"{"gbt": {"rounds": "many"}}"#).unwrap_err();
        assert!(err.to_string().contains("gbt.rounds"), "{err}");
        let err = PipelineConfig::from_json(r#"{"colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn normalized_mode_needs_thresholds() {
        let c = PipelineConfig {
            weight_mode: WeightMode::Normalized,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = PipelineConfig {
            thresholds: Some(BinThresholds::new([0.2, 0.4, 0.6, 0.8]).unwrap()),
            ..c
        };
        c.validate().unwrap();
    }
}
