//! Optimal rooftop PV sizing and dispatch for a household with flexible
//! demand under net energy metering tariffs.
//!
//! The pipeline runs tariff validation ([`tariff`]), utility calibration
//! ([`utility`]), closed-form dispatch ([`dispatch`]), expectations over
//! capacity factors ([`stochastic`]), the capacity optimality condition
//! ([`sizing`]) and comparative statics ([`sensitivity`]). [`scenario`]
//! assembles inputs from data and [`cli`] exposes everything on the
//! command line.

pub mod cli;
pub mod dispatch;
pub mod error;
pub mod format;
pub mod scenario;
pub mod sensitivity;
pub mod sizing;
pub mod stochastic;
pub mod tariff;
pub mod utility;

pub use error::{Error, Result};
pub use scenario::{build_scenario, CalibrationParams, PeriodModel, Scenario};
pub use sizing::{solve_capacity, Classification, InvestmentResult};
pub use tariff::{PeriodId, PeriodPrice, TariffSchedule, ValidatedSchedule};
