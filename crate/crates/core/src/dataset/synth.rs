//! Seeded synthetic city-day generator.
//!
//! Each city gets its own ChaCha stream so adding a profile does not
//! perturb the series of the others. A shared seasonal term (peaking at
//! the June solstice) drives both irradiance and temperature; aod follows
//! its own annual sinusoid peaking mid-July.

use std::f64::consts::TAU;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::schema::{Dataset, SiteRecord};
use crate::error::{Error, Result};

const DEFAULT_PROFILES: &str = include_str!("../../data/oman_profiles.json");

const YEAR_DAYS: f64 = 365.25;
const SOLSTICE_DOY: f64 = 172.0;
const AOD_PEAK_DOY: f64 = 196.0;
const MEAN_TEMPERATURE: f64 = 27.4;
const LAPSE_RATE: f64 = 0.0065;
const WIND_SHAPE: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityProfile {
    pub name: String,
    pub base_elevation: f64,
    pub water_proximity: f64,
    pub land_cover_code: i32,
    pub aod_annual_mean: f64,
    pub aod_summer_amplitude: f64,
    pub solar_mode_low: f64,
    pub solar_mode_high: f64,
    pub wind_scale: f64,
}

impl CityProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(format!("profile `{}`: {what}", self.name)));
        if self.aod_annual_mean <= 0.0 {
            return bad("aod_annual_mean must be positive");
        }
        if self.solar_mode_low >= self.solar_mode_high {
            return bad("solar_mode_low must be below solar_mode_high");
        }
        if self.wind_scale <= 0.0 || self.water_proximity < 0.0 || self.aod_summer_amplitude < 0.0 {
            return bad(
                "wind_scale, water_proximity and aod_summer_amplitude must be non-negative",
            );
        }
        Ok(())
    }
}

/// The ten bundled Omani city profiles.
pub fn default_profiles() -> Vec<CityProfile> {
    serde_json::from_str(DEFAULT_PROFILES).expect("bundled profiles are valid json")
}

pub fn parse_profiles(text: &str) -> Result<Vec<CityProfile>> {
    let profiles: Vec<CityProfile> =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("profiles: {e}")))?;
    for p in &profiles {
        p.validate()?;
    }
    Ok(profiles)
}

pub fn generate_synthetic(
    profiles: &[CityProfile],
    start: NaiveDate,
    end: NaiveDate,
    seed: u64,
) -> Result<Dataset> {
    if start > end {
        return Err(Error::Range {
            start: start.to_string(),
            end: end.to_string(),
        });
    }
    if profiles.is_empty() {
        return Err(Error::EmptyInput("no city profiles"));
    }
    let days = (end - start).num_days() as usize + 1;
    let mut records = Vec::with_capacity(days * profiles.len());
    for (stream, profile) in profiles.iter().enumerate() {
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let mut city = CitySampler::new(profile);
        for date in start.iter_days().take(days) {
            records.push(city.sample(&mut rng, date));
        }
    }
    Dataset::new(records)
}

struct CitySampler<'a> {
    profile: &'a CityProfile,
    unit: Normal<f64>,
    wind: Gamma<f64>,
}

impl<'a> CitySampler<'a> {
    fn new(profile: &'a CityProfile) -> Self {
        CitySampler {
            profile,
            unit: Normal::new(0.0, 1.0).expect("unit normal"),
            wind: Gamma::new(WIND_SHAPE, profile.wind_scale / WIND_SHAPE).expect("positive scale"),
        }
    }

    fn sample(&mut self, rng: &mut ChaCha8Rng, date: NaiveDate) -> SiteRecord {
        let p = self.profile;
        let doy = f64::from(date.ordinal());
        let season = (TAU * (doy - SOLSTICE_DOY) / YEAR_DAYS).cos();

        let p_high = (0.5 + 0.4 * season).clamp(0.05, 0.95);
        let mode = if rng.random::<f64>() < p_high {
            p.solar_mode_high
        } else {
            p.solar_mode_low
        };
        let solar = (mode + 0.25 * season + 0.25 * self.unit.sample(rng)).max(0.5);

        let temperature = MEAN_TEMPERATURE + 7.5 * season - LAPSE_RATE * p.base_elevation
            + 1.8 * self.unit.sample(rng);

        let wind = self.wind.sample(rng);

        let aod_season = (TAU * (doy - AOD_PEAK_DOY) / YEAR_DAYS).cos();
        let aod_noise = 0.02 + 0.1 * p.aod_summer_amplitude;
        let aod = (p.aod_annual_mean
            + p.aod_summer_amplitude * aod_season
            + aod_noise * self.unit.sample(rng))
        .max(0.0);

        SiteRecord {
            city: p.name.clone(),
            date,
            solar_irradiance: round_to(solar, 2),
            temperature: round_to(temperature, 2),
            wind_speed: round_to(wind, 2),
            aod: Some(round_to(aod, 3)),
            land_cover_class: p.land_cover_code,
            water_proximity: p.water_proximity,
            elevation: p.base_elevation,
            month: date.month(),
        }
    }
}

fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}
