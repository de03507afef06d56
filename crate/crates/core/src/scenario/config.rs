//! TOML run configuration: a tariff plus the data and calibration inputs
//! of a scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    aggregate, amortized_cost, build_scenario, read_aggregates, read_hourly, synth_generate, CalibrationParams,
    HourlyRecord, PeriodAggregate, Scenario, SynthParams, ANCHOR_PRICE, CAPEX, CREDIT_FRACTION, DEFAULT_SIGMA_BY_MONTH,
    ELASTICITY, G_MAX, LOAN_MONTHS, LOAN_RATE,
};
use crate::error::{Error, Result};
use crate::tariff::{TariffSchedule, ValidatedSchedule};

fn default_elasticity() -> f64 {
    ELASTICITY
}
fn default_anchor() -> f64 {
    ANCHOR_PRICE
}
fn default_g_max() -> f64 {
    G_MAX
}
fn default_capex() -> f64 {
    CAPEX
}
fn default_rate() -> f64 {
    LOAN_RATE
}
fn default_months() -> u32 {
    LOAN_MONTHS
}
fn default_credit() -> f64 {
    CREDIT_FRACTION
}

/// `[scenario]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    /// Hourly CSV, relative to the config file.
    pub hourly: Option<PathBuf>,
    /// Period aggregates CSV, relative to the config file.
    pub aggregates: Option<PathBuf>,
    /// Generate a synthetic year with this seed instead of reading data.
    pub synthetic_seed: Option<u64>,
    /// Capacity-factor standard deviation per month; required with `hourly`.
    pub sigma_by_month: Option<[f64; 12]>,
    #[serde(default = "default_elasticity")]
    pub elasticity: f64,
    #[serde(default = "default_anchor")]
    pub anchor_price: f64,
    #[serde(default = "default_g_max")]
    pub g_max: f64,
    /// Overrides the cost computed from the loan terms below.
    pub c_g: Option<f64>,
    #[serde(default = "default_capex")]
    pub capex: f64,
    #[serde(default = "default_rate")]
    pub annual_rate: f64,
    #[serde(default = "default_months")]
    pub loan_months: u32,
    #[serde(default = "default_credit")]
    pub credit_fraction: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            hourly: None,
            aggregates: None,
            synthetic_seed: None,
            sigma_by_month: None,
            elasticity: ELASTICITY,
            anchor_price: ANCHOR_PRICE,
            g_max: G_MAX,
            c_g: None,
            capex: CAPEX,
            annual_rate: LOAN_RATE,
            loan_months: LOAN_MONTHS,
            credit_fraction: CREDIT_FRACTION,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    tariff: TariffSchedule,
    scenario: Option<ScenarioSection>,
}

#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub tariff: TariffSchedule,
    pub schedule: ValidatedSchedule,
    pub scenario: Option<ScenarioSection>,
}

fn line_of(text: &str, offset: usize) -> u64 {
    text[..offset.min(text.len())].matches('\n').count() as u64 + 1
}

/// Line of the `index`-th `[[tariff.rule]]` header.
fn rule_line(text: &str, index: usize) -> u64 {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l: String = l.chars().filter(|c| !c.is_whitespace()).collect();
            l.starts_with("[[tariff.rule]]")
        })
        .nth(index)
        .map(|(i, _)| i as u64 + 1)
        .unwrap_or(0)
}

/// Parses and validates a config file.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> Result<LoadedConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    for (i, rule) in file.tariff.rules.iter().enumerate() {
        let problem = if rule.import_price < 0.0 {
            Some(format!("import price {} is negative", rule.import_price))
        } else if rule.export_price > rule.import_price + 1e-12 {
            Some(format!(
                "export price {} exceeds import price {}",
                rule.export_price, rule.import_price
            ))
        } else {
            None
        };
        if let Some(message) = problem {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: rule_line(text, i),
                message,
            });
        }
    }
    let schedule = file.tariff.validate().map_err(|e| match e {
        Error::UncoveredCell { .. } | Error::OverlappingRules { .. } | Error::ConflictingBucketPrices { .. } => {
            Error::Config {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        }
        other => other,
    })?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        tariff: file.tariff,
        schedule,
        scenario: file.scenario,
    })
}

impl LoadedConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    fn section(&self) -> Result<&ScenarioSection> {
        self.scenario.as_ref().ok_or_else(|| Error::Config {
            path: self.path.clone(),
            message: "missing [scenario] table".into(),
        })
    }

    pub fn calibration(&self) -> Result<CalibrationParams> {
        let s = self.section()?;
        let c_g = match s.c_g {
            Some(c) => c,
            None => amortized_cost(s.capex, s.annual_rate, s.loan_months, s.credit_fraction)?,
        };
        Ok(CalibrationParams {
            elasticity: s.elasticity,
            anchor_price: s.anchor_price,
            c_g,
            g_max: s.g_max,
        })
    }

    /// Hourly records named by the config, or a synthetic year.
    /// `seed` overrides `synthetic_seed`.
    pub fn hourly_records(&self, seed: Option<u64>) -> Result<Option<Vec<HourlyRecord>>> {
        let s = self.section()?;
        if let Some(p) = &s.hourly {
            return read_hourly(&self.resolve(p)).map(Some);
        }
        if s.aggregates.is_some() {
            return Ok(None);
        }
        match seed.or(s.synthetic_seed) {
            Some(seed) => Ok(Some(synth_generate(seed, &SynthParams::default()))),
            None => Err(Error::Config {
                path: self.path.clone(),
                message: "[scenario] needs one of `hourly`, `aggregates` or `synthetic_seed`".into(),
            }),
        }
    }

    pub fn aggregates(&self, seed: Option<u64>) -> Result<Vec<PeriodAggregate>> {
        let s = self.section()?;
        let sources = [s.hourly.is_some(), s.aggregates.is_some(), s.synthetic_seed.is_some()];
        if sources.iter().filter(|&&b| b).count() > 1 {
            return Err(Error::Config {
                path: self.path.clone(),
                message: "`hourly`, `aggregates` and `synthetic_seed` are mutually exclusive".into(),
            });
        }
        if let Some(p) = &s.aggregates {
            return read_aggregates(&self.resolve(p));
        }
        let sigma = match (s.sigma_by_month, &s.hourly) {
            (Some(sigma), _) => sigma,
            (None, None) => DEFAULT_SIGMA_BY_MONTH,
            (None, Some(_)) => {
                return Err(Error::Config {
                    path: self.path.clone(),
                    message: "`sigma_by_month` is required with `hourly`".into(),
                })
            }
        };
        let records = self.hourly_records(seed)?.expect("hourly or synthetic source");
        aggregate(&records, &self.schedule, &sigma)
    }

    pub fn build(&self, seed: Option<u64>) -> Result<Scenario> {
        build_scenario(&self.aggregates(seed)?, &self.schedule, &self.calibration()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYMMETRIC: &str = r#"
[tariff]
name = "Symmetric"

[[tariff.rule]]
months = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]
hours = [0, 24]
import_price = 0.35
export_price = 0.35
"#;

    #[test]
    fn symmetric_config() {
        let c = parse_config(SYMMETRIC, Path::new("sym.toml")).unwrap();
        assert_eq!(c.schedule.len(), 12);
        for p in c.schedule.prices() {
            assert_eq!(p.import_price, 0.35);
            assert!((p.export_price - (0.35 - 1e-6)).abs() < 1e-15);
        }
        assert!(c.calibration().is_err());
    }

    #[test]
    fn inverted_rule_reports_its_line() {
        let text = SYMMETRIC.replace("export_price = 0.35", "export_price = 0.40");
        match parse_config(&text, Path::new("bad.toml")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("exceeds"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_report_lines() {
        let text = SYMMETRIC.replace("hours = [0, 24]", "hours = [0, 24");
        assert!(matches!(parse_config(&text, Path::new("x.toml")), Err(Error::Parse { line, .. }) if line >= 8));
        let text = SYMMETRIC.replace("hours", "hour");
        assert!(matches!(
            parse_config(&text, Path::new("x.toml")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn scenario_defaults() {
        let text = format!("{SYMMETRIC}\n[scenario]\nsynthetic_seed = 3\n");
        let c = parse_config(&text, Path::new("x.toml")).unwrap();
        let cal = c.calibration().unwrap();
        assert!((cal.c_g - 341.8577755755114).abs() < 1e-9);
        assert_eq!((cal.elasticity, cal.anchor_price, cal.g_max), (-0.25, 0.35, 13.0));
        let aggs = c.aggregates(None).unwrap();
        assert_eq!(aggs.len(), 12);
        assert_eq!(aggs.iter().map(|a| a.hours).sum::<f64>(), 8760.0);
    }
}
