//! Min-max scaling, directional adjustment of cost features, and temporal
//! interpolation of missing aod.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSchema, SiteRecord, N_FEATURES};
use crate::error::{Error, Result};

/// One feature row in schema order.
pub type Row = [f64; N_FEATURES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixState {
    Raw,
    Scaled,
    Adjusted,
}

/// Row-major matrix with eight columns in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Row>,
    pub state: MatrixState,
}

impl FeatureMatrix {
    pub fn raw(rows: Vec<Row>) -> Self {
        FeatureMatrix {
            rows,
            state: MatrixState::Raw,
        }
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::raw(dataset.raw_rows())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub degenerate: Vec<bool>,
}

pub fn fit_scaler(matrix: &FeatureMatrix) -> Result<ScalingParams> {
    if matrix.is_empty() {
        return Err(Error::EmptyInput("scaler training matrix"));
    }
    let mut min = vec![f64::INFINITY; N_FEATURES];
    let mut max = vec![f64::NEG_INFINITY; N_FEATURES];
    for (i, row) in matrix.rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Parameter(format!(
                    "row {i} column {j} is not finite; interpolate before scaling"
                )));
            }
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    let degenerate = min.iter().zip(&max).map(|(a, b)| a == b).collect();
    Ok(ScalingParams {
        min,
        max,
        degenerate,
    })
}

impl ScalingParams {
    /// Scales one raw row, clamping into `[0, 1]`. Constant columns map to 0.5.
    pub fn scale_row(&self, row: &Row) -> Row {
        let mut out = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            out[j] = if self.degenerate[j] {
                0.5
            } else {
                ((row[j] - self.min[j]) / (self.max[j] - self.min[j])).clamp(0.0, 1.0)
            };
        }
        out
    }
}

pub fn transform(params: &ScalingParams, matrix: &FeatureMatrix) -> FeatureMatrix {
    FeatureMatrix {
        rows: matrix.rows.iter().map(|r| params.scale_row(r)).collect(),
        state: MatrixState::Scaled,
    }
}

/// Maps cost columns to `1 - x`; benefit columns pass through.
pub fn adjust_row(row: &Row, schema: &FeatureSchema) -> Row {
    let mut out = *row;
    for (j, v) in out.iter_mut().enumerate() {
        if schema.is_cost(j) {
            *v = 1.0 - *v;
        }
    }
    out
}

pub fn directional_adjust(matrix: &FeatureMatrix, schema: &FeatureSchema) -> FeatureMatrix {
    let state = match matrix.state {
        MatrixState::Adjusted => MatrixState::Scaled,
        _ => MatrixState::Adjusted,
    };
    FeatureMatrix {
        rows: matrix.rows.iter().map(|r| adjust_row(r, schema)).collect(),
        state,
    }
}

/// Fills missing aod per city by linear interpolation on the day index.
/// Gaps at either end take the nearest observed value.
pub fn interpolate_missing(dataset: &Dataset) -> Result<Dataset> {
    let mut records: Vec<SiteRecord> = dataset.records().to_vec();
    let mut start = 0;
    while start < records.len() {
        let end = start
            + records[start..]
                .iter()
                .take_while(|r| r.city == records[start].city)
                .count();
        fill_city(&mut records[start..end])?;
        start = end;
    }
    Dataset::new(records)
}

fn fill_city(series: &mut [SiteRecord]) -> Result<()> {
    let known: Vec<(i64, f64)> = series
        .iter()
        .filter_map(|r| r.aod.map(|v| (day_index(r), v)))
        .collect();
    if known.is_empty() {
        return Err(Error::UnfillableSeries(series[0].city.clone()));
    }
    if known.len() == series.len() {
        return Ok(());
    }
    let mut next = 0;
    for r in series.iter_mut() {
        let t = day_index(r);
        while next < known.len() && known[next].0 < t {
            next += 1;
        }
        if r.aod.is_some() {
            continue;
        }
        let value = match (next.checked_sub(1).map(|i| known[i]), known.get(next)) {
            (Some((ta, a)), Some(&(tb, b))) => a + (b - a) * (t - ta) as f64 / (tb - ta) as f64,
            (Some((_, a)), None) => a,
            (None, Some(&(_, b))) => b,
            (None, None) => unreachable!("known is non-empty"),
        };
        r.aod = Some(value);
    }
    Ok(())
}

fn day_index(r: &SiteRecord) -> i64 {
    use chrono::Datelike;
    i64::from(r.date.num_days_from_ce())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSchema, AOD, SOLAR_IRRADIANCE};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn series(aod: &[Option<f64>]) -> Dataset {
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let records = aod
            .iter()
            .enumerate()
            .map(|(i, &a)| SiteRecord {
                city: "Nizwa".into(),
                date: start + chrono::Days::new(i as u64),
                solar_irradiance: 6.0,
                temperature: 25.0,
                wind_speed: 2.0,
                aod: a,
                land_cover_class: 30,
                water_proximity: 38.0,
                elevation: 520.0,
                month: 3,
            })
            .collect();
        Dataset::new(records).unwrap()
    }

    fn filled(aod: &[Option<f64>]) -> Vec<f64> {
        interpolate_missing(&series(aod))
            .unwrap()
            .records()
            .iter()
            .map(|r| r.aod.unwrap())
            .collect()
    }

    #[test]
    fn midpoint_fill() {
        let v = filled(&[Some(0.2), None, Some(0.4)]);
        assert!((v[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn leading_gap_extends_nearest() {
        assert_eq!(filled(&[None, Some(0.5)]), [0.5, 0.5]);
    }

    #[test]
    fn two_point_gap_thirds() {
        let v = filled(&[Some(0.1), None, None, Some(0.7)]);
        for (got, want) in v.iter().zip([0.1, 0.3, 0.5, 0.7]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn all_missing_names_city() {
        match interpolate_missing(&series(&[None, None])).unwrap_err() {
            Error::UnfillableSeries(city) => assert_eq!(city, "Nizwa"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn column_matrix(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::raw(values.iter().map(|&v| [v; N_FEATURES]).collect())
    }

    #[test]
    fn scaler_min_max_and_degenerate() {
        let p = fit_scaler(&column_matrix(&[10.0, 20.0, 30.0])).unwrap();
        assert_eq!((p.min[0], p.max[0], p.degenerate[0]), (10.0, 30.0, false));
        let p = fit_scaler(&column_matrix(&[5.0, 5.0, 5.0])).unwrap();
        assert!(p.degenerate[0]);
        assert_eq!(p.scale_row(&[5.0; N_FEATURES])[0], 0.5);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(matches!(
            fit_scaler(&FeatureMatrix::raw(vec![])),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn transform_endpoints_and_clamp() {
        let m = column_matrix(&[10.0, 20.0, 30.0]);
        let p = fit_scaler(&m).unwrap();
        let t = transform(&p, &m);
        assert_eq!(t.column(0).collect::<Vec<_>>(), [0.0, 0.5, 1.0]);
        assert_eq!(p.scale_row(&[35.0; N_FEATURES])[0], 1.0);
    }

    #[test]
    fn adjust_cost_and_benefit() {
        let schema = FeatureSchema::canonical();
        let mut row = [0.0; N_FEATURES];
        row[AOD] = 0.2;
        row[SOLAR_IRRADIANCE] = 0.7;
        let adj = adjust_row(&row, &schema);
        assert_eq!(adj[AOD], 0.8);
        assert_eq!(adj[SOLAR_IRRADIANCE], 0.7);
    }

    proptest! {
        #[test]
        fn transform_always_in_unit_interval(
            train in prop::collection::vec(prop::array::uniform8(-1e3f64..1e3), 1..20),
            probe in prop::array::uniform8(-1e6f64..1e6),
        ) {
            let p = fit_scaler(&FeatureMatrix::raw(train)).unwrap();
            for v in p.scale_row(&probe) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn fitted_columns_attain_both_ends(
            train in prop::collection::vec(prop::array::uniform8(-1e3f64..1e3), 2..20),
        ) {
            let m = FeatureMatrix::raw(train);
            let p = fit_scaler(&m).unwrap();
            let t = transform(&p, &m);
            for j in 0..N_FEATURES {
                if !p.degenerate[j] {
                    prop_assert!(t.column(j).any(|v| v == 0.0));
                    prop_assert!(t.column(j).any(|v| v == 1.0));
                }
            }
        }

        #[test]
        fn adjust_is_involution(rows in prop::collection::vec(prop::array::uniform8(0.0f64..=1.0), 1..10)) {
            let schema = FeatureSchema::canonical();
            let m = FeatureMatrix { rows, state: MatrixState::Scaled };
            let once = directional_adjust(&m, &schema);
            let twice = directional_adjust(&once, &schema);
            for (a, b) in m.rows.iter().zip(&twice.rows) {
                for j in 0..N_FEATURES {
                    if schema.is_cost(j) {
                        prop_assert!((a[j] - b[j]).abs() < 1e-15);
                    } else {
                        prop_assert_eq!(a[j], b[j]);
                    }
                }
            }
            prop_assert_eq!(twice.state, MatrixState::Scaled);
        }

        #[test]
        fn interpolation_keeps_observed_values(
            mask in prop::collection::vec(any::<bool>(), 2..30),
            seedvals in prop::collection::vec(0.0f64..2.0, 30),
        ) {
            prop_assume!(mask.iter().any(|&m| m));
            let aod: Vec<Option<f64>> = mask.iter().zip(&seedvals).map(|(&m, &v)| m.then_some(v)).collect();
            let out = filled(&aod);
            for (o, a) in out.iter().zip(&aod) {
                if let Some(v) = a {
                    prop_assert_eq!(o, v);
                }
            }
        }
    }
}
