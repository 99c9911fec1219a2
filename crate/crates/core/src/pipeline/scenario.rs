use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bundle::ModelBundle;
use crate::dataset::{FEATURE_NAMES, N_FEATURES};
use crate::error::{Error, Result};
use crate::gbt::argmax;
use crate::preprocess::Row;
use crate::shap::ShapPlan;

/// One hypothetical site in raw physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub solar_irradiance: f64,
    pub temperature: f64,
    pub wind_speed: f64,
    pub aod: f64,
    pub land_cover_class: f64,
    pub water_proximity: f64,
    pub elevation: f64,
    pub month: f64,
}

impl ScenarioRequest {
    pub fn to_row(&self) -> Row {
        [
            self.solar_irradiance,
            self.temperature,
            self.wind_speed,
            self.aod,
            self.land_cover_class,
            self.water_proximity,
            self.elevation,
            self.month,
        ]
    }

    pub fn from_row(row: &Row) -> Self {
        ScenarioRequest {
            solar_irradiance: row[0],
            temperature: row[1],
            wind_speed: row[2],
            aod: row[3],
            land_cover_class: row[4],
            water_proximity: row[5],
            elevation: row[6],
            month: row[7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShap {
    pub class: usize,
    pub label: String,
    pub baseline: f64,
    pub margin: f64,
    pub shap: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResponse {
    pub proxy_class: usize,
    pub proxy_label: String,
    pub probabilities: Vec<f64>,
    /// Attribution for `proxy_class`, in margin space.
    pub shap: BTreeMap<String, f64>,
    pub shap_baseline: f64,
    pub sci: f64,
    pub sci_class: String,
    pub contributions: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_classes: Option<Vec<ClassShap>>,
}

fn named(values: &Row) -> BTreeMap<String, f64> {
    FEATURE_NAMES
        .iter()
        .zip(values)
        .map(|(n, v)| (n.to_string(), *v))
        .collect()
}

impl ModelBundle {
    pub fn scenario(
        &self,
        request: &ScenarioRequest,
        all_classes: bool,
    ) -> Result<ScenarioResponse> {
        let raw = request.to_row();
        if let Some(j) = (0..N_FEATURES).find(|&j| !raw[j].is_finite()) {
            return Err(Error::Parameter(format!(
                "`{}` must be a finite number",
                FEATURE_NAMES[j]
            )));
        }
        let (scaled, adjusted) = self.prepare(&raw);
        let probabilities = self.ensemble.predict_proba(&scaled)?;
        let proxy_class = argmax(&probabilities);
        let plan = ShapPlan::new(&self.ensemble);
        let attribution = plan.explain(&scaled, &self.background, proxy_class)?;
        let sci = self.sci(&adjusted);

        let all_classes = if all_classes {
            let list = (0..self.ensemble.n_classes)
                .map(|c| {
                    let a = if c == proxy_class {
                        attribution.clone()
                    } else {
                        plan.explain(&scaled, &self.background, c)?
                    };
                    Ok(ClassShap {
                        class: c,
                        label: self.proxy.label(c).to_string(),
                        baseline: a.baseline,
                        margin: a.margin,
                        shap: named(&a.values),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(list)
        } else {
            None
        };

        Ok(ScenarioResponse {
            proxy_class,
            proxy_label: self.proxy.label(proxy_class).to_string(),
            probabilities,
            shap: named(&attribution.values),
            shap_baseline: attribution.baseline,
            sci: sci.sci,
            sci_class: sci.label,
            contributions: named(&sci.contributions),
            all_classes,
        })
    }
}
