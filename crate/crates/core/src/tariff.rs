//! Net-metering tariff schedules.
//!
//! A raw [`TariffSchedule`] is a list of assignment rules, each covering a set
//! of months and a half-open hour range with a peak flag and an
//! import/export price pair. Validation expands the rules into settlement
//! periods (one per month and peak flag by default) and repairs equal
//! import/export prices by moving the export price [`PRICE_EPSILON`] below
//! the import price.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gap enforced between import and export prices, in $/kWh.
pub const PRICE_EPSILON: f64 = 1e-6;

/// Export prices may exceed import prices by at most this much before the
/// schedule is rejected instead of repaired.
const INVERSION_TOLERANCE: f64 = 1e-12;

pub const MONTHS: u8 = 12;
pub const HOURS: u8 = 24;

/// Index of a settlement period within a validated schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeriodId(pub usize);

impl fmt::Display for PeriodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodPrice {
    /// $/kWh paid for imports.
    pub import_price: f64,
    /// $/kWh credited for exports.
    pub export_price: f64,
}

impl PeriodPrice {
    pub fn new(import_price: f64, export_price: f64) -> Self {
        Self {
            import_price,
            export_price,
        }
    }

    /// Checks ordering and moves the export price below the import price
    /// when the two are equal (or closer than [`PRICE_EPSILON`]).
    fn repaired(self, label: &str) -> Result<(Self, bool)> {
        if !self.import_price.is_finite() || !self.export_price.is_finite() {
            return Err(Error::invalid("price", format!("period {label}: non-finite price")));
        }
        if self.import_price < 0.0 {
            return Err(Error::NegativeImportPrice {
                period: label.to_string(),
                import: self.import_price,
            });
        }
        if self.export_price - self.import_price > INVERSION_TOLERANCE {
            return Err(Error::InvertedPrices {
                period: label.to_string(),
                import: self.import_price,
                export: self.export_price,
            });
        }
        if self.import_price - self.export_price < PRICE_EPSILON * (1.0 - 1e-6) {
            let fixed = Self::new(self.import_price, self.import_price - PRICE_EPSILON);
            return Ok((fixed, true));
        }
        Ok((self, false))
    }
}

/// How hours are grouped into settlement periods.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// One period per month and peak flag.
    #[default]
    Monthly,
    /// One period per month and hour of day.
    MonthlyHourly,
}

/// One `[[tariff.rule]]` entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentRule {
    /// Months 1-12.
    pub months: Vec<u8>,
    /// Half-open `[start, end)` range on the 24h clock.
    pub hours: [u8; 2],
    #[serde(default)]
    pub peak: bool,
    pub import_price: f64,
    pub export_price: f64,
}

impl AssignmentRule {
    pub fn new(months: &[u8], hours: [u8; 2], peak: bool, import: f64, export: f64) -> Self {
        Self {
            months: months.to_vec(),
            hours,
            peak,
            import_price: import,
            export_price: export,
        }
    }

    fn covers(&self, month: u8, hour: u8) -> bool {
        self.months.contains(&month) && hour >= self.hours[0] && hour < self.hours[1]
    }
}

/// A tariff as written in the config file, before validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSchedule {
    pub name: String,
    /// $ per billing horizon.
    #[serde(default)]
    pub fixed_charge: f64,
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(rename = "rule", default)]
    pub rules: Vec<AssignmentRule>,
}

/// Identifies the bucket of hours a period stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PeriodKey {
    pub month: u8,
    pub peak: bool,
    pub hour: Option<u8>,
}

impl fmt::Display for PeriodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = if self.peak { "peak" } else { "offpeak" };
        match self.hour {
            Some(h) => write!(f, "m{:02}-h{:02}-{flag}", self.month, h),
            None => write!(f, "m{:02}-{flag}", self.month),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub id: PeriodId,
    pub key: PeriodKey,
    pub price: PeriodPrice,
    /// Set when the export price was moved below an equal import price.
    pub repaired: bool,
}

/// Which prices a perturbation touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbScope {
    All,
    Period(PeriodId),
}

/// A schedule whose rules partition the year and whose prices satisfy
/// `import - export >= PRICE_EPSILON` in every period.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidatedSchedule {
    pub name: String,
    pub fixed_charge: f64,
    periods: Vec<Period>,
    #[serde(skip)]
    cells: Vec<PeriodId>,
}

impl TariffSchedule {
    pub fn validate(&self) -> Result<ValidatedSchedule> {
        validate_schedule(self)
    }

    fn single(name: &str, import: f64, export: f64) -> Self {
        Self {
            name: name.into(),
            fixed_charge: 0.0,
            granularity: Granularity::Monthly,
            rules: vec![AssignmentRule::new(&ALL_MONTHS, [0, 24], true, import, export)],
        }
    }

    /// Peak/off-peak tariff with a single contiguous peak window.
    fn time_of_use(name: &str, peak: [u8; 2], summer: [f64; 4], other: [f64; 4]) -> Self {
        let mut rules = Vec::new();
        for (months, p) in [(&SUMMER[..], summer), (&NON_SUMMER[..], other)] {
            rules.push(AssignmentRule::new(months, peak, true, p[0], p[2]));
            if peak[0] > 0 {
                rules.push(AssignmentRule::new(months, [0, peak[0]], false, p[1], p[3]));
            }
            if peak[1] < HOURS {
                rules.push(AssignmentRule::new(months, [peak[1], HOURS], false, p[1], p[3]));
            }
        }
        Self {
            name: name.into(),
            fixed_charge: 0.0,
            granularity: Granularity::Monthly,
            rules,
        }
    }

    /// Flat 0.35 $/kWh in both directions.
    pub fn symmetric() -> Self {
        Self::single("Symmetric", 0.35, 0.35)
    }

    /// Flat 0.35 $/kWh imports, 0.16 $/kWh exports, 3-8pm peak buckets.
    pub fn asymmetric() -> Self {
        Self::time_of_use(
            "Asymmetric",
            [15, 20],
            [0.35, 0.35, 0.16, 0.16],
            [0.35, 0.35, 0.16, 0.16],
        )
    }

    /// Time-of-use with a 3-8pm peak.
    pub fn proposed() -> Self {
        Self::time_of_use("Proposed", [15, 20], [0.73, 0.29, 0.73, 0.28], [0.48, 0.29, 0.48, 0.29])
    }

    /// Same prices as [`TariffSchedule::proposed`] with a 6-11pm peak.
    pub fn late() -> Self {
        Self::time_of_use("Late", [18, 23], [0.73, 0.29, 0.73, 0.28], [0.48, 0.29, 0.48, 0.29])
    }

    /// Asymmetric time-of-use with a 3-8pm peak.
    pub fn prop_asym() -> Self {
        Self::time_of_use(
            "Prop.-Asym.",
            [15, 20],
            [0.55, 0.45, 0.25, 0.20],
            [0.35, 0.24, 0.15, 0.10],
        )
    }

    /// The five case-study tariffs.
    pub fn case_study() -> Vec<Self> {
        vec![
            Self::symmetric(),
            Self::asymmetric(),
            Self::proposed(),
            Self::late(),
            Self::prop_asym(),
        ]
    }
}

pub const SUMMER: [u8; 3] = [6, 7, 8];
pub const NON_SUMMER: [u8; 9] = [1, 2, 3, 4, 5, 9, 10, 11, 12];
pub const ALL_MONTHS: [u8; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

fn cell_index(month: u8, hour: u8) -> usize {
    (month as usize - 1) * HOURS as usize + hour as usize
}

/// Expands rules into settlement periods and checks coverage and prices.
pub fn validate_schedule(schedule: &TariffSchedule) -> Result<ValidatedSchedule> {
    if !schedule.fixed_charge.is_finite() {
        return Err(Error::invalid("fixed_charge", "must be finite"));
    }
    for rule in &schedule.rules {
        let [start, end] = rule.hours;
        if start >= end || end > HOURS {
            return Err(Error::invalid(
                "hours",
                format!("range [{start}, {end}) is not a half-open range within 0..24"),
            ));
        }
        if rule.months.is_empty() {
            return Err(Error::invalid("months", "rule lists no months"));
        }
        if let Some(m) = rule.months.iter().find(|&&m| m == 0 || m > MONTHS) {
            return Err(Error::invalid("months", format!("month {m} outside 1..=12")));
        }
    }

    // (month, hour) -> rule index
    let mut owner = vec![usize::MAX; MONTHS as usize * HOURS as usize];
    for month in 1..=MONTHS {
        for hour in 0..HOURS {
            let mut hits = schedule
                .rules
                .iter()
                .enumerate()
                .filter(|(_, r)| r.covers(month, hour))
                .map(|(i, _)| i);
            let first = hits.next().ok_or(Error::UncoveredCell { month, hour })?;
            if hits.next().is_some() {
                return Err(Error::OverlappingRules { month, hour });
            }
            owner[cell_index(month, hour)] = first;
        }
    }

    let mut periods: Vec<Period> = Vec::new();
    let mut cells = vec![PeriodId(0); owner.len()];
    for month in 1..=MONTHS {
        let mut keys: Vec<PeriodKey> = (0..HOURS)
            .map(|hour| {
                let rule = &schedule.rules[owner[cell_index(month, hour)]];
                match schedule.granularity {
                    Granularity::Monthly => PeriodKey {
                        month,
                        peak: rule.peak,
                        hour: None,
                    },
                    Granularity::MonthlyHourly => PeriodKey {
                        month,
                        peak: rule.peak,
                        hour: Some(hour),
                    },
                }
            })
            .collect();
        let cell_keys = keys.clone();
        keys.sort_by_key(|k| (k.hour, k.peak));
        keys.dedup();

        for key in keys {
            let label = key.to_string();
            let mut price: Option<PeriodPrice> = None;
            for hour in 0..HOURS {
                if cell_keys[hour as usize] != key {
                    continue;
                }
                let rule = &schedule.rules[owner[cell_index(month, hour)]];
                let p = PeriodPrice::new(rule.import_price, rule.export_price);
                match price {
                    None => price = Some(p),
                    Some(q) if q != p => return Err(Error::ConflictingBucketPrices { period: label }),
                    Some(_) => {}
                }
            }
            let (price, repaired) = price.expect("key came from a covered cell").repaired(&label)?;
            let id = PeriodId(periods.len());
            for hour in 0..HOURS {
                if cell_keys[hour as usize] == key {
                    cells[cell_index(month, hour)] = id;
                }
            }
            periods.push(Period {
                id,
                key,
                price,
                repaired,
            });
        }
    }

    Ok(ValidatedSchedule {
        name: schedule.name.clone(),
        fixed_charge: schedule.fixed_charge,
        periods,
        cells,
    })
}

impl ValidatedSchedule {
    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn price(&self, id: PeriodId) -> PeriodPrice {
        self.periods[id.0].price
    }

    pub fn prices(&self) -> impl Iterator<Item = PeriodPrice> + '_ {
        self.periods.iter().map(|p| p.price)
    }

    /// Schedule made directly from per-period prices, with no timestamp
    /// mapping. Equal prices are repaired as in [`validate_schedule`].
    ///
    /// Panics if a price pair is invalid (negative import or export above import).
    pub fn from_prices(name: &str, fixed_charge: f64, prices: Vec<PeriodPrice>) -> Self {
        let periods = prices
            .into_iter()
            .enumerate()
            .map(|(i, price)| {
                let key = PeriodKey {
                    month: 1,
                    peak: false,
                    hour: None,
                };
                let (price, repaired) = price
                    .repaired(&format!("#{i}"))
                    .unwrap_or_else(|e| panic!("invalid price for period {i}: {e}"));
                Period {
                    id: PeriodId(i),
                    key,
                    price,
                    repaired,
                }
            })
            .collect();
        Self {
            name: name.into(),
            fixed_charge,
            periods,
            cells: Vec::new(),
        }
    }

    /// Settlement period of a (month 1-12, hour 0-23) timestamp.
    ///
    /// Panics on out-of-range months or hours, or if the schedule was built
    /// from bare prices.
    pub fn assign_period(&self, month: u8, hour: u8) -> PeriodId {
        assert!((1..=MONTHS).contains(&month), "month {month} out of range");
        assert!(hour < HOURS, "hour {hour} out of range");
        assert!(
            !self.cells.is_empty(),
            "schedule {} has no timestamp mapping",
            self.name
        );
        self.cells[cell_index(month, hour)]
    }

    /// Additive price shift, re-validated.
    pub fn perturb(&self, dpi_plus: f64, dpi_minus: f64, scope: PerturbScope) -> Result<Self> {
        let mut out = self.clone();
        for period in &mut out.periods {
            let hit = match scope {
                PerturbScope::All => true,
                PerturbScope::Period(id) => id == period.id,
            };
            if !hit {
                continue;
            }
            let shifted = PeriodPrice::new(
                period.price.import_price + dpi_plus,
                period.price.export_price + dpi_minus,
            );
            let (price, repaired) = shifted.repaired(&period.key.to_string())?;
            period.price = price;
            period.repaired |= repaired;
        }
        Ok(out)
    }

    /// Replaces one period's prices, re-validated.
    pub fn with_price(&self, id: PeriodId, price: PeriodPrice) -> Result<Self> {
        let mut out = self.clone();
        let period = &mut out.periods[id.0];
        let (price, repaired) = price.repaired(&period.key.to_string())?;
        period.price = price;
        period.repaired = repaired;
        Ok(out)
    }
}
