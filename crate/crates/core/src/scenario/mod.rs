//! Scenario assembly: hourly data, settlement-period aggregation, utility
//! calibration, PV cost, and the tariff sweep.

mod config;
mod io;
mod sweep;
mod synth;

pub use config::{load_config, parse_config, LoadedConfig, ScenarioSection};
pub use io::{
    read_aggregates, read_aggregates_from, read_hourly, read_hourly_from, write_aggregates, write_hourly, write_table,
    write_utility_params, UtilityParamRow,
};
pub use sweep::{run_sweep, SweepCell, SweepConfig, SweepGrid};
pub use synth::{synth_generate, SynthParams, DEFAULT_SIGMA_BY_MONTH};

use serde::{Deserialize, Serialize};

use crate::dispatch::{expected_period_quantities, ExpectedQuantities};
use crate::error::{Error, Result};
use crate::stochastic::CapacityFactorDist;
use crate::tariff::{PeriodId, PeriodPrice, PerturbScope, ValidatedSchedule};
use crate::utility::{calibrate, PeriodUtility, Thresholds, Utility};

/// Anchor retail price for utility calibration, $/kWh.
pub const ANCHOR_PRICE: f64 = 0.35;
/// Own-price elasticity at the anchor.
pub const ELASTICITY: f64 = -0.25;
/// Upper bound on installed PV, kW.
pub const G_MAX: f64 = 13.0;
/// Installed PV cost, $/kW.
pub const CAPEX: f64 = 3750.0;
pub const LOAN_RATE: f64 = 0.055;
pub const LOAN_MONTHS: u32 = 120;
/// Share of the cost left after the federal tax credit.
pub const CREDIT_FRACTION: f64 = 0.7;

/// One hour of demand and PV output per kW installed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    /// kWh
    pub demand_kwh: f64,
    pub capacity_factor: f64,
}

impl HourlyRecord {
    pub fn check(&self) -> Result<()> {
        if !(1..=12).contains(&self.month) || !(1..=31).contains(&self.day) || self.hour > 23 {
            return Err(Error::invalid(
                "timestamp",
                format!("month {} day {} hour {} out of range", self.month, self.day, self.hour),
            ));
        }
        if !(self.demand_kwh >= 0.0 && self.demand_kwh.is_finite()) {
            return Err(Error::invalid(
                "demand_kwh",
                format!("must be non-negative, got {}", self.demand_kwh),
            ));
        }
        if !(0.0..=1.0).contains(&self.capacity_factor) {
            return Err(Error::invalid(
                "capacity_factor",
                format!("must lie in [0, 1], got {}", self.capacity_factor),
            ));
        }
        Ok(())
    }
}

/// Per-period inputs to calibration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodAggregate {
    pub period_id: usize,
    /// Sum of hourly demand over the bucket, kWh.
    pub d0_kwh: f64,
    /// Mean hourly capacity factor over all hours of the bucket.
    pub mean_cf: f64,
    pub sigma: f64,
    pub psi_max: f64,
    /// Hours in the bucket; generation in the period is `hours * psi * g`.
    pub hours: f64,
}

/// Sums demand and averages capacity factors per settlement period.
///
/// `sigma_by_month[m - 1]` becomes the capacity-factor standard deviation of
/// every period in month `m`.
pub fn aggregate(
    records: &[HourlyRecord],
    schedule: &ValidatedSchedule,
    sigma_by_month: &[f64; 12],
) -> Result<Vec<PeriodAggregate>> {
    let n = schedule.len();
    let mut demand = vec![0.0; n];
    let mut cf = vec![0.0; n];
    let mut count = vec![0usize; n];
    for r in records {
        r.check()?;
        let id = schedule.assign_period(r.month, r.hour).0;
        demand[id] += r.demand_kwh;
        cf[id] += r.capacity_factor;
        count[id] += 1;
    }
    schedule
        .periods()
        .iter()
        .map(|p| {
            let i = p.id.0;
            if count[i] == 0 {
                return Err(Error::EmptyBucket(p.key.to_string()));
            }
            Ok(PeriodAggregate {
                period_id: i,
                d0_kwh: demand[i],
                mean_cf: cf[i] / count[i] as f64,
                sigma: sigma_by_month[p.key.month as usize - 1],
                psi_max: 1.0,
                hours: count[i] as f64,
            })
        })
        .collect()
}

/// Yearly amortized cost of one kW of PV: a monthly-compounded annuity
/// times 12, scaled by the share not covered by tax credits.
pub fn amortized_cost(capex: f64, annual_rate: f64, n_months: u32, credit_fraction: f64) -> Result<f64> {
    if n_months == 0 {
        return Err(Error::invalid("n_months", "loan term must be positive"));
    }
    if annual_rate < 0.0 {
        return Err(Error::invalid("annual_rate", "must be non-negative"));
    }
    let r = annual_rate / 12.0;
    let n = n_months as f64;
    let monthly = if r < 1e-12 {
        capex / n
    } else {
        capex * r / (1.0 - (1.0 + r).powf(-n))
    };
    Ok(credit_fraction * 12.0 * monthly)
}

/// Case-study PV cost, about 341.86 $/kW/yr.
pub fn default_pv_cost() -> f64 {
    amortized_cost(CAPEX, LOAN_RATE, LOAN_MONTHS, CREDIT_FRACTION).expect("constants are valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodModel {
    pub utility: PeriodUtility,
    pub dist: CapacityFactorDist,
    /// Energy per kW at capacity factor 1 over the period, in hours.
    pub hours: f64,
}

impl PeriodModel {
    pub fn new(utility: PeriodUtility, dist: CapacityFactorDist) -> Self {
        Self {
            utility,
            dist,
            hours: 1.0,
        }
    }

    /// Generation capacity in the period's energy units for `g` kW.
    pub fn effective_capacity(&self, g: f64) -> f64 {
        self.hours * g
    }

    pub fn is_generating(&self) -> bool {
        self.hours > 0.0 && self.dist.is_generating()
    }
}

/// Everything needed to size PV for one household under one tariff.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub schedule: ValidatedSchedule,
    pub periods: Vec<PeriodModel>,
    /// $/kW over the billing horizon.
    pub c_g: f64,
    /// kW
    pub g_max: f64,
}

/// Scenario-wide expected totals at a given capacity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Totals {
    pub net_demand: f64,
    pub consumption: f64,
    /// Includes the fixed charge.
    pub payment: f64,
    pub utility: f64,
}

impl Scenario {
    pub fn new(schedule: ValidatedSchedule, periods: Vec<PeriodModel>, c_g: f64, g_max: f64) -> Result<Self> {
        if schedule.len() != periods.len() {
            return Err(Error::invalid(
                "periods",
                format!(
                    "schedule has {} periods but {} models were given",
                    schedule.len(),
                    periods.len()
                ),
            ));
        }
        if schedule.is_empty() {
            return Err(Error::invalid("periods", "at least one settlement period is required"));
        }
        if !(c_g >= 0.0 && c_g.is_finite()) {
            return Err(Error::invalid("c_g", format!("must be non-negative, got {c_g}")));
        }
        if !(g_max > 0.0 && g_max.is_finite()) {
            return Err(Error::invalid("g_max", format!("must be positive, got {g_max}")));
        }
        if let Some(p) = periods.iter().find(|p| !(p.hours >= 0.0 && p.hours.is_finite())) {
            return Err(Error::invalid(
                "hours",
                format!("must be non-negative, got {}", p.hours),
            ));
        }
        Ok(Self {
            schedule,
            periods,
            c_g,
            g_max,
        })
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn price(&self, t: usize) -> PeriodPrice {
        self.schedule.price(PeriodId(t))
    }

    pub fn thresholds(&self, t: usize) -> Thresholds {
        self.periods[t].utility.thresholds(self.price(t))
    }

    pub fn expected_quantities_at(&self, t: usize, g: f64) -> Result<ExpectedQuantities> {
        let p = &self.periods[t];
        expected_period_quantities(&p.utility, self.price(t), &p.dist, p.effective_capacity(g))
    }

    pub fn totals_at(&self, g: f64) -> Result<Totals> {
        let mut out = Totals {
            payment: self.schedule.fixed_charge,
            ..Totals::default()
        };
        for t in 0..self.len() {
            let q = self.expected_quantities_at(t, g)?;
            out.net_demand += q.net_demand();
            out.consumption += q.consumption;
            out.payment += q.payment;
            out.utility += q.utility;
        }
        Ok(out)
    }

    pub fn with_schedule(&self, schedule: ValidatedSchedule) -> Self {
        assert_eq!(schedule.len(), self.len());
        Self {
            schedule,
            ..self.clone()
        }
    }

    pub fn with_cost(&self, c_g: f64) -> Self {
        Self { c_g, ..self.clone() }
    }

    pub fn perturbed(&self, dpi_plus: f64, dpi_minus: f64, scope: PerturbScope) -> Result<Self> {
        Ok(self.with_schedule(self.schedule.perturb(dpi_plus, dpi_minus, scope)?))
    }

    /// Single-period scenario, mainly for closed-form checks.
    pub fn single_period(
        utility: PeriodUtility,
        price: PeriodPrice,
        dist: CapacityFactorDist,
        c_g: f64,
        g_max: f64,
    ) -> Result<Self> {
        let schedule = ValidatedSchedule::from_prices("single", 0.0, vec![price]);
        Self::new(schedule, vec![PeriodModel::new(utility, dist)], c_g, g_max)
    }
}

/// Calibration inputs shared by every period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub elasticity: f64,
    pub anchor_price: f64,
    pub c_g: f64,
    pub g_max: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            elasticity: ELASTICITY,
            anchor_price: ANCHOR_PRICE,
            c_g: default_pv_cost(),
            g_max: G_MAX,
        }
    }
}

/// Calibrates per-period utilities and capacity-factor distributions.
///
/// Periods with zero anchor demand get [`PeriodUtility::ZeroDemand`];
/// periods with zero mean capacity factor never generate.
pub fn build_scenario(
    aggregates: &[PeriodAggregate],
    schedule: &ValidatedSchedule,
    params: &CalibrationParams,
) -> Result<Scenario> {
    if aggregates.len() != schedule.len() {
        return Err(Error::invalid(
            "aggregates",
            format!("{} rows for {} settlement periods", aggregates.len(), schedule.len()),
        ));
    }
    let mut periods = Vec::with_capacity(aggregates.len());
    for (i, agg) in aggregates.iter().enumerate() {
        if agg.period_id != i {
            return Err(Error::invalid(
                "period_id",
                format!("expected {i}, found {}", agg.period_id),
            ));
        }
        if agg.d0_kwh.is_nan() || agg.d0_kwh < 0.0 || !(0.0..=1.0).contains(&agg.mean_cf) {
            return Err(Error::invalid(
                "aggregates",
                format!("period {i}: d0 {} / mean_cf {} out of range", agg.d0_kwh, agg.mean_cf),
            ));
        }
        let utility = if agg.d0_kwh > 0.0 {
            PeriodUtility::Quadratic(calibrate(agg.d0_kwh, params.anchor_price, params.elasticity)?)
        } else {
            PeriodUtility::ZeroDemand
        };
        let dist = if agg.mean_cf > 0.0 && agg.psi_max > 0.0 {
            CapacityFactorDist::clipped_normal(agg.mean_cf, agg.sigma, agg.psi_max)?
        } else {
            CapacityFactorDist::PointMass(0.0)
        };
        periods.push(PeriodModel {
            utility,
            dist,
            hours: agg.hours,
        });
    }
    Scenario::new(schedule.clone(), periods, params.c_g, params.g_max)
}
