//! End-to-end orchestration, persistence and scenario scoring.

mod bundle;
mod config;
mod scenario;

pub use bundle::{
    dataset_fingerprint, load_bundle, save_bundle, ModelBundle, RecordScore, TrainingMetadata,
    BUNDLE_VERSION,
};
pub use config::PipelineConfig;
pub use scenario::{ClassShap, ScenarioRequest, ScenarioResponse};

use serde::{Deserialize, Serialize};

use crate::cluster::{rank_clusters, select_k_with, KSelectionReport, CLASS_LABELS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gbt::{evaluate, train, EvalReport, TrainHistory};
use crate::index::{class_histogram, compute_sci, CompositeWeights, N_SCI_CLASSES};
use crate::preprocess::{
    directional_adjust, fit_scaler, interpolate_missing, transform, FeatureMatrix, Row,
};
use crate::shap::{global_importance, BackgroundSet, ImportanceTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Holdout,
    /// No rows were held out, so the report is in-sample.
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SciHistogram {
    pub labels: Vec<String>,
    pub counts: [u64; N_SCI_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReports {
    pub k_selection: KSelectionReport,
    /// Rows per proxy class.
    pub proxy_class_counts: Vec<usize>,
    pub history: TrainHistory,
    pub evaluation: EvalReport,
    pub evaluated_on: EvalSplit,
    pub importance: ImportanceTable,
    pub sci_histogram: SciHistogram,
}

pub fn run_pipeline(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<(ModelBundle, PipelineReports)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let schema = dataset.schema.clone();

    let filled = interpolate_missing(dataset).map_err(|e| e.in_stage("interpolate"))?;
    let raw = FeatureMatrix::from_dataset(&filled);
    let scaler = fit_scaler(&raw).map_err(|e| e.in_stage("scale"))?;
    let scaled = transform(&scaler, &raw);
    let adjusted = directional_adjust(&scaled, &schema);

    let (k_selection, models) = select_k_with(
        &scaled.rows,
        config.k_min,
        config.k_max,
        config.cluster_seed,
        &config.kmeans,
    )
    .map_err(|e| e.in_stage("cluster"))?;
    let kmeans = models[k_selection.chosen_k - config.k_min].clone();
    let clusters = kmeans.assign(&scaled.rows);
    let proxy =
        rank_clusters(&kmeans, &adjusted.rows, &clusters).map_err(|e| e.in_stage("cluster"))?;
    let labels: Vec<usize> = clusters.iter().map(|&c| proxy.class_of(c)).collect();
    let mut proxy_class_counts = vec![0; proxy.n_classes()];
    for &l in &labels {
        proxy_class_counts[l] += 1;
    }

    let trained = train(
        &scaled.rows,
        &labels,
        proxy.n_classes(),
        &config.gbt,
        config.validation_fraction,
        config.seed,
    )
    .map_err(|e| e.in_stage("train"))?;
    let ensemble = trained.ensemble;

    let mut is_holdout = vec![false; scaled.len()];
    for &i in &trained.holdout {
        is_holdout[i] = true;
    }
    let pick = |holdout: bool| -> (Vec<Row>, Vec<usize>) {
        (0..scaled.len())
            .filter(|&i| is_holdout[i] == holdout)
            .map(|i| (scaled.rows[i], labels[i]))
            .unzip()
    };
    let (train_rows, _) = pick(false);
    let (evaluation, evaluated_on) = if trained.holdout.is_empty() {
        (
            evaluate(&ensemble, &scaled.rows, &labels),
            EvalSplit::Training,
        )
    } else {
        let (rows, y) = pick(true);
        (evaluate(&ensemble, &rows, &y), EvalSplit::Holdout)
    };
    let evaluation = evaluation.map_err(|e| e.in_stage("evaluate"))?;

    let explain = |e: Error| e.in_stage("explain");
    let background = BackgroundSet::sample(
        &train_rows,
        config.background_size,
        config.seed.wrapping_add(1),
    )
    .map_err(explain)?;
    let sample = BackgroundSet::sample(
        &train_rows,
        config.importance_sample,
        config.seed.wrapping_add(2),
    )
    .map_err(explain)?;
    let importance = global_importance(&ensemble, &sample.rows, &background).map_err(explain)?;

    let weights = CompositeWeights::from_table(&importance, config.weight_mode)
        .map_err(|e| e.in_stage("index"))?;
    let thresholds = config.bin_thresholds();
    let sci: Vec<_> = adjusted
        .rows
        .iter()
        .map(|r| compute_sci(r, &weights, &thresholds))
        .collect();
    let sci_histogram = SciHistogram {
        labels: CLASS_LABELS.iter().map(|s| s.to_string()).collect(),
        counts: class_histogram(&sci),
    };

    let records = dataset.records();
    let metadata = TrainingMetadata {
        dataset_fingerprint: dataset_fingerprint(dataset),
        records: records.len(),
        cities: dataset.cities().iter().map(|c| c.to_string()).collect(),
        first_date: records.iter().map(|r| r.date).min().expect("non-empty"),
        last_date: records.iter().map(|r| r.date).max().expect("non-empty"),
        config: config.clone(),
    };

    let bundle = ModelBundle {
        version: BUNDLE_VERSION,
        schema,
        scaler,
        kmeans,
        proxy,
        ensemble,
        background,
        importance: importance.clone(),
        weights,
        thresholds,
        metadata,
    };
    let reports = PipelineReports {
        k_selection,
        proxy_class_counts,
        history: trained.history,
        evaluation,
        evaluated_on,
        importance,
        sci_histogram,
    };
    Ok((bundle, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{default_profiles, generate_synthetic};
    use chrono::NaiveDate;

    fn small_run() -> (Dataset, ModelBundle, PipelineReports) {
        let profiles = default_profiles()[..4].to_vec();
        let d = |m, day| NaiveDate::from_ymd_opt(2021, m, day).unwrap();
        let ds = generate_synthetic(&profiles, d(1, 1), d(3, 31), 5).unwrap();
        let config = PipelineConfig {
            k_max: 5,
            gbt: crate::gbt::GbtParams {
                rounds: 15,
                ..Default::default()
            },
            background_size: 16,
            importance_sample: 24,
            ..Default::default()
        };
        let (bundle, reports) = run_pipeline(&ds, &config).unwrap();
        (ds, bundle, reports)
    }

    #[test]
    fn small_run_is_consistent_and_reloads() {
        let (ds, bundle, reports) = small_run();
        bundle.validate().unwrap();
        assert_eq!(reports.evaluated_on, EvalSplit::Holdout);
        assert_eq!(
            reports.sci_histogram.counts.iter().sum::<u64>(),
            ds.len() as u64
        );
        assert_eq!(reports.proxy_class_counts.iter().sum::<usize>(), ds.len());
        let text = bundle.to_json();
        let back = ModelBundle::from_json(&text).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.to_json(), text);

        let ranking = bundle.rank_dataset(&ds).unwrap();
        assert_eq!(ranking.len(), 4);
        let scores = bundle.score_dataset(&ds).unwrap();
        assert_eq!(scores.len(), ds.len());
    }

    #[test]
    fn version_and_truncation_errors() {
        let (_, bundle, _) = small_run();
        let text = bundle.to_json();
        let tampered = text.replacen("\"version\": 1", "\"version\": 99", 1);
        assert!(matches!(
            ModelBundle::from_json(&tampered),
            Err(Error::UnsupportedVersion {
                found: 99,
                expected: 1
            })
        ));
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            ModelBundle::from_json(truncated),
            Err(Error::Schema(_))
        ));
        let broken = text.replacen("\"learning_rate\"", "\"learning_rat\"", 1);
        let err = ModelBundle::from_json(&broken).unwrap_err();
        assert!(err.to_string().contains("ensemble"), "{err}");
    }

    #[test]
    fn scenario_matches_direct_computation() {
        let (ds, bundle, _) = small_run();
        let raw = ds.records()[7].features();
        let req = ScenarioRequest::from_row(&raw);
        let resp = bundle.scenario(&req, true).unwrap();
        let (scaled, adjusted) = bundle.prepare(&raw);
        assert_eq!(resp.sci, bundle.sci(&adjusted).sci);
        assert!((resp.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let margin = bundle.ensemble.predict_margins(&scaled).unwrap()[resp.proxy_class];
        let total: f64 = resp.shap.values().sum();
        assert!((resp.shap_baseline + total - margin).abs() < 1e-9);
        assert_eq!(resp.all_classes.unwrap().len(), bundle.ensemble.n_classes);
    }

    #[test]
    fn single_record_is_infeasible() {
        let profiles = default_profiles()[..1].to_vec();
        let d = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let ds = generate_synthetic(&profiles, d, d, 1).unwrap();
        let err = run_pipeline(&ds, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err.root(), Error::InfeasibleK { .. }), "{err}");
        assert!(err.to_string().starts_with("cluster"));
    }
}
