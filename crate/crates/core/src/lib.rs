//! Explainable site-suitability engine.
//!
//! The pipeline runs four stages over city-day observations:
//!
//! 1. k-means on min-max scaled features produces proxy suitability classes,
//! 2. a softmax gradient-boosted tree ensemble learns those classes,
//! 3. exact Shapley values over the eight features give a global importance,
//! 4. importance-weighted sums of direction-adjusted features form a
//!    composite suitability index, binned into five ordinal classes.
//!
//! [`pipeline::run_pipeline`] wires the stages together and produces a
//! [`pipeline::ModelBundle`] that can be persisted and served.

pub mod cluster;
pub mod dataset;
mod error;
pub mod gbt;
pub mod index;
pub mod pipeline;
pub mod preprocess;
pub mod shap;

pub use error::{Error, Result};

pub use cluster::{KMeansModel, KSelectionReport, ProxyLabeling};
pub use dataset::{Dataset, FeatureSchema, SiteRecord, FEATURE_NAMES, N_FEATURES};
pub use gbt::{EvalReport, GbtEnsemble, GbtParams, TrainHistory};
pub use index::{BinThresholds, CompositeWeights, SuitabilityResult, WeightMode};
pub use pipeline::{
    ModelBundle, PipelineConfig, PipelineReports, ScenarioRequest, ScenarioResponse,
};
pub use preprocess::{Row, ScalingParams};
pub use shap::{BackgroundSet, ImportanceTable, ShapAttribution};
