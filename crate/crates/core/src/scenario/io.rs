//! CSV readers and writers for hourly data, period aggregates and
//! calibrated utilities.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HourlyRecord, PeriodAggregate, Scenario};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::utility::Utility;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: csv_kind_message(kind),
        },
    }
}

fn csv_kind_message(kind: csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        other => format!("{other:?}"),
    }
}

fn write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: "<output>".into(),
            source,
        },
        kind => Error::Numerical(format!("CSV write failed: {kind:?}")),
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(reader: impl Read, path: &Path) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: T = row.map_err(|e| csv_error(path, e))?;
        // header is line 1
        out.push((out.len() as u64 + 2, row));
    }
    Ok(out)
}

/// Reads `month, day, hour, demand_kwh, capacity_factor` rows.
pub fn read_hourly(path: &Path) -> Result<Vec<HourlyRecord>> {
    read_hourly_from(open(path)?, path)
}

pub fn read_hourly_from(reader: impl Read, path: &Path) -> Result<Vec<HourlyRecord>> {
    read_rows::<HourlyRecord>(reader, path)?
        .into_iter()
        .map(|(line, r)| {
            r.check().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            Ok(r)
        })
        .collect()
}

pub fn write_hourly(w: impl Write, records: &[HourlyRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["month", "day", "hour", "demand_kwh", "capacity_factor"])
        .map_err(write_error)?;
    for r in records {
        wtr.write_record([
            r.month.to_string(),
            r.day.to_string(),
            r.hour.to_string(),
            sig9(r.demand_kwh),
            sig9(r.capacity_factor),
        ])
        .map_err(write_error)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<output>".into(),
        source,
    })
}

#[derive(Deserialize)]
struct AggregateRow {
    period_id: usize,
    d0_kwh: f64,
    mean_cf: f64,
    sigma: f64,
    psi_max: f64,
    hours: Option<f64>,
}

/// Reads `period_id, d0_kwh, mean_cf, sigma, psi_max[, hours]` rows.
/// A missing `hours` column means one hour per period.
pub fn read_aggregates(path: &Path) -> Result<Vec<PeriodAggregate>> {
    read_aggregates_from(open(path)?, path)
}

pub fn read_aggregates_from(reader: impl Read, path: &Path) -> Result<Vec<PeriodAggregate>> {
    read_rows::<AggregateRow>(reader, path)?
        .into_iter()
        .map(|(line, r)| {
            let agg = PeriodAggregate {
                period_id: r.period_id,
                d0_kwh: r.d0_kwh,
                mean_cf: r.mean_cf,
                sigma: r.sigma,
                psi_max: r.psi_max,
                hours: r.hours.unwrap_or(1.0),
            };
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            if !(agg.d0_kwh >= 0.0 && agg.d0_kwh.is_finite()) {
                return Err(bad(format!("d0_kwh must be non-negative, got {}", agg.d0_kwh)));
            }
            if !(0.0..=1.0).contains(&agg.mean_cf) || !(0.0..=1.0).contains(&agg.psi_max) {
                return Err(bad("mean_cf and psi_max must lie in [0, 1]".into()));
            }
            if !(agg.hours >= 0.0 && agg.hours.is_finite()) {
                return Err(bad(format!("hours must be non-negative, got {}", agg.hours)));
            }
            Ok(agg)
        })
        .collect()
}

/// Writes aggregates with shortest round-trip float formatting, so that
/// re-reading reproduces the values exactly.
pub fn write_aggregates(w: impl Write, aggregates: &[PeriodAggregate]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["period_id", "d0_kwh", "mean_cf", "sigma", "psi_max", "hours"])
        .map_err(write_error)?;
    for a in aggregates {
        wtr.write_record([
            a.period_id.to_string(),
            a.d0_kwh.to_string(),
            a.mean_cf.to_string(),
            a.sigma.to_string(),
            a.psi_max.to_string(),
            a.hours.to_string(),
        ])
        .map_err(write_error)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<output>".into(),
        source,
    })
}

/// One calibrated period as emitted by `calibrate`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtilityParamRow {
    pub period_id: usize,
    pub period: String,
    pub import_price: f64,
    pub export_price: f64,
    /// None for zero-demand periods.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub d_plus: f64,
    pub d_minus: f64,
    pub hours: f64,
    pub mean_cf: f64,
}

impl UtilityParamRow {
    pub fn from_scenario(scenario: &Scenario) -> Vec<Self> {
        scenario
            .periods
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let price = scenario.price(t);
                let th = p.utility.thresholds(price);
                let q = p.utility.quadratic();
                let mean_cf = match p.dist {
                    crate::stochastic::CapacityFactorDist::PointMass(v) => v,
                    crate::stochastic::CapacityFactorDist::ClippedNormal { mu, .. } => mu,
                };
                UtilityParamRow {
                    period_id: t,
                    period: scenario.schedule.periods()[t].key.to_string(),
                    import_price: price.import_price,
                    export_price: price.export_price,
                    a: q.map(|q| q.a),
                    b: q.map(|q| q.b),
                    d_plus: th.d_plus,
                    d_minus: th.d_minus,
                    hours: p.hours,
                    mean_cf,
                }
            })
            .collect()
    }
}

pub fn write_utility_params(w: impl Write, rows: &[UtilityParamRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "period_id",
        "period",
        "import_price",
        "export_price",
        "a",
        "b",
        "d_plus",
        "d_minus",
        "hours",
        "mean_cf",
    ])
    .map_err(write_error)?;
    let opt = |x: Option<f64>| x.map(sig9).unwrap_or_default();
    for r in rows {
        wtr.write_record([
            r.period_id.to_string(),
            r.period.clone(),
            sig9(r.import_price),
            sig9(r.export_price),
            opt(r.a),
            opt(r.b),
            sig9(r.d_plus),
            sig9(r.d_minus),
            sig9(r.hours),
            sig9(r.mean_cf),
        ])
        .map_err(write_error)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<output>".into(),
        source,
    })
}

/// Writes a numeric table with 9 significant digits.
pub fn write_table(w: impl Write, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header).map_err(write_error)?;
    for row in rows {
        wtr.write_record(row.into_iter().map(sig9)).map_err(write_error)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<output>".into(),
        source,
    })
}
