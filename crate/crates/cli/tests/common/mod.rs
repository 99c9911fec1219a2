use chrono::NaiveDate;
use suitability_core::dataset::{default_profiles, generate_synthetic, Dataset};
use suitability_core::gbt::GbtParams;
use suitability_core::pipeline::{run_pipeline, ModelBundle, PipelineConfig};

pub fn small_config() -> PipelineConfig {
    PipelineConfig {
        k_max: 5,
        gbt: GbtParams {
            rounds: 20,
            ..Default::default()
        },
        background_size: 24,
        importance_sample: 40,
        ..Default::default()
    }
}

pub fn small_dataset() -> Dataset {
    let d = |m, day| NaiveDate::from_ymd_opt(2022, m, day).unwrap();
    generate_synthetic(&default_profiles()[..5], d(3, 1), d(6, 30), 11).unwrap()
}

#[allow(dead_code)]
pub fn small_bundle() -> (Dataset, ModelBundle) {
    let ds = small_dataset();
    let (bundle, _) = run_pipeline(&ds, &small_config()).unwrap();
    (ds, bundle)
}
