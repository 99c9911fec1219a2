//! Feature schema, site records and the dataset container.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of model features.
pub const N_FEATURES: usize = 8;

/// Canonical feature order used by every matrix in the crate.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "solar_irradiance",
    "temperature",
    "wind_speed",
    "aod",
    "land_cover_class",
    "water_proximity",
    "elevation",
    "month",
];

pub const SOLAR_IRRADIANCE: usize = 0;
pub const TEMPERATURE: usize = 1;
pub const WIND_SPEED: usize = 2;
pub const AOD: usize = 3;
pub const LAND_COVER_CLASS: usize = 4;
pub const WATER_PROXIMITY: usize = 5;
pub const ELEVATION: usize = 6;
pub const MONTH: usize = 7;

/// Whether larger raw values make a site more (benefit) or less (cost) suitable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Benefit,
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    CodedCategorical,
    CyclicMonth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub unit: String,
    pub direction: Direction,
    pub kind: FeatureKind,
}

/// Ordered descriptors for the eight model features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDescriptor>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::canonical()
    }
}

impl FeatureSchema {
    pub fn canonical() -> Self {
        use Direction::*;
        use FeatureKind::*;
        let spec: [(&str, &str, Direction, FeatureKind); N_FEATURES] = [
            ("solar_irradiance", "kWh/m²/day", Benefit, Continuous),
            ("temperature", "°C", Benefit, Continuous),
            ("wind_speed", "m/s", Benefit, Continuous),
            ("aod", "dimensionless", Cost, Continuous),
            ("land_cover_class", "code", Benefit, CodedCategorical),
            ("water_proximity", "km", Cost, Continuous),
            ("elevation", "m", Cost, Continuous),
            ("month", "1-12", Benefit, CyclicMonth),
        ];
        FeatureSchema {
            features: spec
                .iter()
                .map(|&(name, unit, direction, kind)| FeatureDescriptor {
                    name: name.to_string(),
                    unit: unit.to_string(),
                    direction,
                    kind,
                })
                .collect(),
        }
    }

    /// Checks the arity, order and cost set against the canonical schema.
    pub fn validate(&self) -> Result<()> {
        if self.features.len() != N_FEATURES {
            return Err(Error::Schema(format!(
                "expected {N_FEATURES} features, found {}",
                self.features.len()
            )));
        }
        let canonical = Self::canonical();
        for (got, want) in self.features.iter().zip(&canonical.features) {
            if got.name != want.name || got.direction != want.direction {
                return Err(Error::Schema(format!(
                    "feature `{}` does not match canonical `{}`",
                    got.name, want.name
                )));
            }
        }
        Ok(())
    }

    pub fn is_cost(&self, index: usize) -> bool {
        self.features[index].direction == Direction::Cost
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

/// One city-day observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub city: String,
    pub date: NaiveDate,
    pub solar_irradiance: f64,
    pub temperature: f64,
    pub wind_speed: f64,
    pub aod: Option<f64>,
    pub land_cover_class: i32,
    pub water_proximity: f64,
    pub elevation: f64,
    pub month: u32,
}

impl SiteRecord {
    /// Raw feature row in schema order. Missing aod becomes NaN.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.solar_irradiance,
            self.temperature,
            self.wind_speed,
            self.aod.unwrap_or(f64::NAN),
            f64::from(self.land_cover_class),
            self.water_proximity,
            self.elevation,
            f64::from(self.month),
        ]
    }

    fn check(&self) -> Result<()> {
        use chrono::Datelike;
        let fail = |msg: String| Err(Error::Schema(format!("{} {}: {msg}", self.city, self.date)));
        if self.month != self.date.month() {
            return fail(format!("month {} disagrees with date", self.month));
        }
        let values = self.features();
        for (i, v) in values.iter().enumerate() {
            if i == AOD && self.aod.is_none() {
                continue;
            }
            if !v.is_finite() {
                return fail(format!("{} is not finite", FEATURE_NAMES[i]));
            }
        }
        for i in [SOLAR_IRRADIANCE, WIND_SPEED, AOD, WATER_PROXIMITY] {
            if values[i] < 0.0 {
                return fail(format!("{} is negative", FEATURE_NAMES[i]));
            }
        }
        Ok(())
    }
}

/// Records sorted by `(city, date)` and unique on that key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub schema: FeatureSchema,
    records: Vec<SiteRecord>,
}

impl Dataset {
    /// Sorts the records and rejects duplicate `(city, date)` keys.
    pub fn new(mut records: Vec<SiteRecord>) -> Result<Self> {
        for r in &records {
            r.check()?;
        }
        records.sort_by(|a, b| a.city.cmp(&b.city).then(a.date.cmp(&b.date)));
        if let Some(w) = records
            .windows(2)
            .find(|w| w[0].city == w[1].city && w[0].date == w[1].date)
        {
            return Err(Error::DuplicateKey {
                city: w[0].city.clone(),
                date: w[0].date.to_string(),
            });
        }
        Ok(Dataset {
            schema: FeatureSchema::canonical(),
            records,
        })
    }

    pub fn records(&self) -> &[SiteRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SiteRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct city names in sorted order.
    pub fn cities(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.city.as_str()) {
                out.push(&r.city);
            }
        }
        out
    }

    /// Raw feature rows; missing aod is NaN.
    pub fn raw_rows(&self) -> Vec<[f64; N_FEATURES]> {
        self.records.iter().map(SiteRecord::features).collect()
    }
}
