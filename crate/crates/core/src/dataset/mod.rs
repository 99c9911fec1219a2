//! Feature schema, CSV interchange, the synthetic generator and EDA statistics.

mod csv_io;
mod eda;
mod schema;
mod synth;

pub use csv_io::{load_csv, load_csv_str, write_csv, CSV_COLUMNS};
pub use eda::{eda_summary, mean, pearson, skewness, CityMonthlyAod, EdaSummary, FeatureStats};
pub use schema::*;
pub use synth::{default_profiles, generate_synthetic, parse_profiles, CityProfile};
