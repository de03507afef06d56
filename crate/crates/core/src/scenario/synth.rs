//! Synthetic hourly demand and PV profiles for a New England household.
//!
//! PV output follows clear-sky solar elevation at the configured latitude,
//! scaled by a daily clearness index whose odds of a clear day vary by
//! month. Demand is a base load with a summer-peaking seasonal swing,
//! morning and evening bumps and Gaussian noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HourlyRecord;
use crate::stochastic::task_rng;

const DAYS_IN_MONTH: [u8; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Placeholder capacity-factor standard deviations by month.
pub const DEFAULT_SIGMA_BY_MONTH: [f64; 12] = [0.20, 0.18, 0.15, 0.12, 0.08, 0.05, 0.05, 0.06, 0.09, 0.13, 0.17, 0.20];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub latitude_deg: f64,
    /// Capacity factor with the sun at zenith under a clear sky.
    pub clear_sky_peak: f64,
    /// Probability of a clear day, by month.
    pub clear_day_probability: [f64; 12],
    /// Relative hour-to-hour PV noise.
    pub cf_noise: f64,
    /// Base load, kWh per hour.
    pub base_load: f64,
    /// Relative seasonal swing of the base load (peaks in mid July).
    pub seasonal_amplitude: f64,
    /// Height of the evening bump (centered at 19:00), kWh.
    pub evening_peak: f64,
    /// Height of the morning bump (centered at 07:30), kWh.
    pub morning_peak: f64,
    /// Standard deviation of hourly demand noise, kWh.
    pub demand_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            latitude_deg: 42.4,
            clear_sky_peak: 0.74,
            clear_day_probability: [0.40, 0.45, 0.50, 0.50, 0.55, 0.60, 0.65, 0.62, 0.60, 0.55, 0.42, 0.38],
            cf_noise: 0.05,
            base_load: 0.55,
            seasonal_amplitude: 0.25,
            evening_peak: 0.7,
            morning_peak: 0.3,
            demand_noise: 0.08,
        }
    }
}

/// Sine of the solar elevation at the middle of `hour` (local solar time).
fn sin_elevation(latitude_deg: f64, day_of_year: u32, hour: u8) -> f64 {
    let phi = latitude_deg.to_radians();
    let decl = 23.45_f64.to_radians() * (2.0 * PI * (284.0 + day_of_year as f64) / 365.0).sin();
    let omega = (15.0 * (hour as f64 + 0.5 - 12.0)).to_radians();
    phi.sin() * decl.sin() + phi.cos() * decl.cos() * omega.cos()
}

/// One non-leap year of hourly records, deterministic in `seed`.
pub fn synth_generate(seed: u64, params: &SynthParams) -> Vec<HourlyRecord> {
    let mut rng = task_rng(seed, 0);
    let demand_noise = Normal::new(0.0, params.demand_noise.max(0.0)).expect("finite sd");
    let cf_noise = Normal::new(1.0, params.cf_noise.max(0.0)).expect("finite sd");
    let mut out = Vec::with_capacity(8760);
    let mut day_of_year = 0u32;
    for month in 1..=12u8 {
        let p_clear = params.clear_day_probability[month as usize - 1];
        for day in 1..=DAYS_IN_MONTH[month as usize - 1] {
            day_of_year += 1;
            let clearness = if rng.random::<f64>() < p_clear {
                rng.random_range(0.80..1.0)
            } else {
                rng.random_range(0.10..0.65)
            };
            let season = 1.0 + params.seasonal_amplitude * (2.0 * PI * (day_of_year as f64 - 196.0) / 365.0).cos();
            for hour in 0..24u8 {
                let sun = sin_elevation(params.latitude_deg, day_of_year, hour);
                let noise: f64 = cf_noise.sample(&mut rng);
                let capacity_factor = if sun > 0.0 {
                    (params.clear_sky_peak * sun * clearness * noise).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let h = hour as f64 + 0.5;
                let bumps = params.evening_peak * (-(h - 19.0).powi(2) / 8.0).exp()
                    + params.morning_peak * (-(h - 7.5).powi(2) / 4.5).exp();
                let eps: f64 = demand_noise.sample(&mut rng);
                let demand_kwh = (params.base_load * season + bumps + eps).max(0.02);
                out.push(HourlyRecord {
                    month,
                    day,
                    hour,
                    demand_kwh,
                    capacity_factor,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_complete() {
        let p = SynthParams::default();
        let a = synth_generate(7, &p);
        assert_eq!(a.len(), 8760);
        assert_eq!(a, synth_generate(7, &p));
        assert_ne!(a, synth_generate(8, &p));
        assert!(a.iter().all(|r| r.check().is_ok()));
    }

    #[test]
    fn night_is_dark_and_summer_is_brighter() {
        let recs = synth_generate(2018, &SynthParams::default());
        assert!(recs.iter().filter(|r| r.hour == 2).all(|r| r.capacity_factor == 0.0));
        let noon = |m: u8| {
            let v: Vec<f64> = recs
                .iter()
                .filter(|r| r.month == m && r.hour == 12)
                .map(|r| r.capacity_factor)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(noon(7) > noon(1));
    }

    #[test]
    fn plausible_annual_totals() {
        let recs = synth_generate(2018, &SynthParams::default());
        let yield_kwh: f64 = recs.iter().map(|r| r.capacity_factor).sum();
        let demand: f64 = recs.iter().map(|r| r.demand_kwh).sum();
        assert!((900.0..1400.0).contains(&yield_kwh), "{yield_kwh}");
        assert!((5000.0..10000.0).contains(&demand), "{demand}");
    }
}
