//! Marginal value of capacity and the optimal PV size.
//!
//! F(g) is the expected value of one more kW: each period contributes its
//! capacity factor weighted by the import price, the marginal utility of
//! consumption, or the export price, depending on the dispatch regime.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{regime_integrand, Regime, Tie};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::stochastic::expect;
use crate::utility::Utility;

/// Absolute tolerance on `|c_g - F|` for set-valued and corner solutions.
pub const COST_TOL: f64 = 1e-9;

const MAX_BISECTIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Interior,
    AtZero,
    AtMax,
    SetValued,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvestmentResult {
    /// kW
    pub g_star: f64,
    pub classification: Classification,
    /// Optimal set `[lo, hi]`; a single point unless set-valued.
    pub interval: [f64; 2],
    /// Unprojected root of `F(g) = c_g`, when it lies in `[flat_bound, g_max]`.
    pub g_dagger: Option<f64>,
    #[serde(rename = "F_at_gstar")]
    pub f_at_gstar: f64,
    pub c_g: f64,
    pub flat_bound: f64,
}

impl InvestmentResult {
    pub fn is_unique(&self) -> bool {
        self.classification != Classification::SetValued
    }
}

/// Per-period piece of F at scaled capacity `x_scale = hours * g`:
/// E[psi * gamma(psi * x_scale)].
fn period_marginal(scenario: &Scenario, t: usize, g: f64) -> Result<f64> {
    let p = &scenario.periods[t];
    if !p.is_generating() {
        return Ok(0.0);
    }
    let price = scenario.price(t);
    let th = scenario.thresholds(t);
    let u = p.utility;
    let x_scale = p.effective_capacity(g);
    let f = move |r: Regime, psi: f64| {
        let gamma = match r {
            Regime::Import => price.import_price,
            Regime::Export => price.export_price,
            Regime::NetZero => u.marginal(psi * x_scale).clamp(price.export_price, price.import_price),
        };
        psi * gamma
    };
    Ok(p.hours * expect(&p.dist, &regime_integrand(x_scale, th, Tie::Closed, f))?)
}

/// `E[psi^k * 1{regime}]` for period `t` at capacity `g`.
pub(crate) fn regime_moment(scenario: &Scenario, t: usize, g: f64, regime: Regime, k: i32, tie: Tie) -> Result<f64> {
    let p = &scenario.periods[t];
    if !p.is_generating() {
        return Ok(if k == 0 && regime_at_zero(scenario, t, tie) == regime {
            1.0
        } else {
            0.0
        });
    }
    let th = scenario.thresholds(t);
    let f = move |r: Regime, psi: f64| if r == regime { psi.powi(k) } else { 0.0 };
    expect(&p.dist, &regime_integrand(p.effective_capacity(g), th, tie, f))
}

fn regime_at_zero(scenario: &Scenario, t: usize, tie: Tie) -> Regime {
    crate::dispatch::classify(0.0, scenario.thresholds(t), tie)
}

/// F(g) in $/kW.
pub fn marginal_value(scenario: &Scenario, g: f64) -> Result<f64> {
    if g.is_nan() || g < 0.0 {
        return Err(Error::invalid("g", format!("capacity must be non-negative, got {g}")));
    }
    let mut total = 0.0;
    for t in 0..scenario.len() {
        total += period_marginal(scenario, t, g)?;
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteMarginalValue { g });
    }
    Ok(total)
}

/// One-sided slope of F: `Tie::Up` gives the right derivative, `Tie::Down`
/// the left one. Only periods in the open net-zero regime contribute.
pub fn marginal_value_slope(scenario: &Scenario, g: f64, tie: Tie) -> Result<f64> {
    let mut total = 0.0;
    for (t, p) in scenario.periods.iter().enumerate() {
        if !p.is_generating() {
            continue;
        }
        let th = scenario.thresholds(t);
        if th.d_minus <= th.d_plus {
            continue;
        }
        let u = p.utility;
        let x_scale = p.effective_capacity(g);
        let f = move |r: Regime, psi: f64| {
            if r == Regime::NetZero {
                psi * psi * u.curvature(psi * x_scale)
            } else {
                0.0
            }
        };
        total += p.hours * p.hours * expect(&p.dist, &regime_integrand(x_scale, th, tie, f))?;
    }
    Ok(total)
}

/// Largest capacity at which every generating period still imports for
/// every capacity-factor realization: `min_t d+_t / (hours_t * psi_max_t)`.
/// Infinite when no period generates.
pub fn flat_bound(scenario: &Scenario) -> f64 {
    scenario
        .periods
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_generating())
        .map(|(t, p)| scenario.thresholds(t).d_plus / (p.hours * p.dist.psi_max()))
        .fold(f64::INFINITY, f64::min)
}

/// Optimal capacity for the scenario's `c_g` and `g_max`.
pub fn solve_capacity(scenario: &Scenario) -> Result<InvestmentResult> {
    solve_capacity_with(scenario, scenario.c_g, scenario.g_max)
}

pub fn solve_capacity_with(scenario: &Scenario, c_g: f64, g_max: f64) -> Result<InvestmentResult> {
    if !(c_g >= 0.0 && c_g.is_finite()) {
        return Err(Error::invalid("c_g", format!("must be non-negative, got {c_g}")));
    }
    if !(g_max > 0.0 && g_max.is_finite()) {
        return Err(Error::invalid("g_max", format!("must be positive, got {g_max}")));
    }
    let fb = flat_bound(scenario);
    let flat_end = fb.min(g_max);
    let f0 = marginal_value(scenario, 0.0)?;
    let point = |g: f64, classification, f: f64, g_dagger| InvestmentResult {
        g_star: g,
        classification,
        interval: [g, g],
        g_dagger,
        f_at_gstar: f,
        c_g,
        flat_bound: fb,
    };

    if c_g > f0 + COST_TOL {
        return Ok(point(0.0, Classification::AtZero, f0, None));
    }
    if (c_g - f0).abs() <= COST_TOL {
        return Ok(InvestmentResult {
            g_star: 0.5 * flat_end,
            classification: Classification::SetValued,
            interval: [0.0, flat_end],
            g_dagger: None,
            f_at_gstar: f0,
            c_g,
            flat_bound: fb,
        });
    }
    let f_max = marginal_value(scenario, g_max)?;
    if c_g < f_max - COST_TOL {
        return Ok(point(g_max, Classification::AtMax, f_max, None));
    }

    // F(lo) = F(0) > c_g >= F(hi) - tol
    let (mut lo, mut hi) = (flat_end, g_max);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if marginal_value(scenario, mid)? > c_g {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g = 0.5 * (lo + hi);
    let f = marginal_value(scenario, g)?;
    Ok(point(g, Classification::Interior, f, Some(g)))
}

/// F on a grid of capacities, evaluated in parallel.
pub fn marginal_value_curve(scenario: &Scenario, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if let Some(g) = grid.iter().find(|g| g.is_nan() || **g < 0.0) {
        return Err(Error::invalid(
            "grid",
            format!("capacities must be non-negative, got {g}"),
        ));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("grid", "capacities must be sorted"));
    }
    grid.par_iter()
        .map(|&g| Ok((g, marginal_value(scenario, g)?)))
        .collect()
}

/// `steps + 1` evenly spaced capacities on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![lo];
    }
    (0..=steps)
        .map(|i| {
            if i == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / steps as f64
            }
        })
        .collect()
}
