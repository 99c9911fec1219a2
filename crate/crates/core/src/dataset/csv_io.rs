//! Canonical CSV interchange.
//!
//! Header is fixed, dates are ISO `YYYY-MM-DD`, missing aod is an empty
//! cell. Floats are written with the shortest representation that parses
//! back to the same bits.

use std::io::Read;

use chrono::NaiveDate;

use super::schema::{Dataset, SiteRecord};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 10] = [
    "city",
    "date",
    "solar_irradiance",
    "temperature",
    "wind_speed",
    "aod",
    "land_cover_class",
    "water_proximity",
    "elevation",
    "month",
];

pub fn load_csv<R: Read>(source: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let header = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    check_header(&header)?;

    let mut records = Vec::new();
    for result in reader.records() {
        let row = result.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            column: String::new(),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != CSV_COLUMNS.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", CSV_COLUMNS.len(), row.len()),
            });
        }
        records.push(parse_row(&row, line)?);
    }
    Dataset::new(records)
}

pub fn load_csv_str(text: &str) -> Result<Dataset> {
    load_csv(text.as_bytes())
}

fn check_header(header: &csv::StringRecord) -> Result<()> {
    for (i, expected) in CSV_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got.trim() == *expected => {}
            Some(got) => {
                return Err(Error::Schema(format!(
                    "column {} is `{got}`, expected `{expected}`",
                    i + 1
                )))
            }
            None => return Err(Error::Schema(format!("missing column `{expected}`"))),
        }
    }
    if let Some(extra) = header.get(CSV_COLUMNS.len()) {
        return Err(Error::Schema(format!("unexpected column `{extra}`")));
    }
    Ok(())
}

fn parse_row(row: &csv::StringRecord, line: usize) -> Result<SiteRecord> {
    let cell = |i: usize| row.get(i).unwrap_or("").trim();
    let err = |i: usize, message: String| Error::Parse {
        row: line,
        column: CSV_COLUMNS[i].to_string(),
        message,
    };
    let float = |i: usize| -> Result<f64> {
        let text = cell(i);
        let v: f64 = text
            .parse()
            .map_err(|_| err(i, format!("`{text}` is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(i, format!("`{text}` is not finite")))
        }
    };
    let int = |i: usize| -> Result<i64> {
        let text = cell(i);
        text.parse()
            .map_err(|_| err(i, format!("`{text}` is not an integer")))
    };

    let city = cell(0);
    if city.is_empty() {
        return Err(err(0, "empty city".into()));
    }
    let date = NaiveDate::parse_from_str(cell(1), "%Y-%m-%d")
        .map_err(|e| err(1, format!("`{}`: {e}", cell(1))))?;
    let aod = if cell(5).is_empty() {
        None
    } else {
        Some(float(5)?)
    };
    let land_cover_class =
        i32::try_from(int(6)?).map_err(|_| err(6, "land cover code out of range".into()))?;
    let month = u32::try_from(int(9)?)
        .ok()
        .filter(|m| (1..=12).contains(m))
        .ok_or_else(|| err(9, format!("`{}` is not a month", cell(9))))?;

    Ok(SiteRecord {
        city: city.to_string(),
        date,
        solar_irradiance: float(2)?,
        temperature: float(3)?,
        wind_speed: float(4)?,
        aod,
        land_cover_class,
        water_proximity: float(7)?,
        elevation: float(8)?,
        month,
    })
}

pub fn write_csv(dataset: &Dataset) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(CSV_COLUMNS).expect("writing to memory");
    for r in dataset.records() {
        writer
            .write_record([
                r.city.clone(),
                r.date.format("%Y-%m-%d").to_string(),
                r.solar_irradiance.to_string(),
                r.temperature.to_string(),
                r.wind_speed.to_string(),
                r.aod.map(|v| v.to_string()).unwrap_or_default(),
                r.land_cover_class.to_string(),
                r.water_proximity.to_string(),
                r.elevation.to_string(),
                r.month.to_string(),
            ])
            .expect("writing to memory");
    }
    let bytes = writer.into_inner().expect("flushing memory writer");
    String::from_utf8(bytes).expect("csv output is utf-8")
}
