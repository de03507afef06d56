//! Closed-form optimal operation for a fixed capacity.
//!
//! Given thresholds `d+ <= d-` and on-site generation `x`, the prosumer
//! imports up to `d+` when `x < d+`, exports the surplus above `d-` when
//! `x > d-`, and otherwise consumes exactly its own generation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::Scenario;
use crate::stochastic::{expect, CapacityFactorDist, PiecewiseIntegrand};
use crate::tariff::{PeriodPrice, ValidatedSchedule};
use crate::utility::{Thresholds, Utility};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Import,
    NetZero,
    Export,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Import, Regime::NetZero, Regime::Export];

    pub fn label(self) -> &'static str {
        match self {
            Regime::Import => "import",
            Regime::NetZero => "net-zero",
            Regime::Export => "export",
        }
    }
}

/// How generation exactly at a threshold is classified.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tie {
    /// Net zero on the closed interval `[d+, d-]`.
    Closed,
    /// The regime entered when generation moves up (or thresholds move down).
    Up,
    /// The regime entered when generation moves down.
    Down,
}

pub fn classify(generation: f64, th: Thresholds, tie: Tie) -> Regime {
    let x = generation;
    let (below, above) = match tie {
        Tie::Closed => (x < th.d_plus, x > th.d_minus),
        Tie::Up => (x < th.d_plus, x >= th.d_minus),
        Tie::Down => (x <= th.d_plus, x > th.d_minus),
    };
    if below {
        Regime::Import
    } else if above {
        Regime::Export
    } else {
        Regime::NetZero
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub consumption: f64,
    pub import: f64,
    pub export: f64,
    pub regime: Regime,
    /// `pi+ * import - pi- * export`
    pub period_payment: f64,
    pub period_utility: f64,
}

impl DispatchResult {
    pub fn net_demand(&self) -> f64 {
        self.import - self.export
    }
}

/// Optimal operation for on-site generation `generation` (kWh in the period).
pub fn dispatch_generation<U: Utility + ?Sized>(
    u: &U,
    price: PeriodPrice,
    th: Thresholds,
    generation: f64,
) -> DispatchResult {
    let regime = classify(generation, th, Tie::Closed);
    let (consumption, import, export) = match regime {
        Regime::Import => (th.d_plus, th.d_plus - generation, 0.0),
        Regime::Export => (th.d_minus, 0.0, generation - th.d_minus),
        Regime::NetZero => (generation, 0.0, 0.0),
    };
    DispatchResult {
        consumption,
        import,
        export,
        regime,
        period_payment: price.import_price * import - price.export_price * export,
        period_utility: u.value(consumption),
    }
}

/// Optimal operation at capacity `g` and realized capacity factor `psi`.
pub fn optimal_dispatch<U: Utility + ?Sized>(u: &U, price: PeriodPrice, g: f64, psi: f64) -> DispatchResult {
    dispatch_generation(u, price, u.thresholds(price), g * psi)
}

/// Total payment `pi_c + sum_t (pi+ d+ - pi- d-)`, one dispatch per period.
pub fn payment(schedule: &ValidatedSchedule, dispatches: &[DispatchResult]) -> f64 {
    assert_eq!(schedule.len(), dispatches.len(), "one dispatch per period");
    schedule.fixed_charge
        + schedule
            .prices()
            .zip(dispatches)
            .map(|(p, d)| p.import_price * d.import - p.export_price * d.export)
            .sum::<f64>()
}

/// Integrand over the capacity factor whose branch depends on the dispatch
/// regime at generation `psi * g`. Breakpoints sit at `d+/g` and `d-/g`.
pub fn regime_integrand<'a>(
    g: f64,
    th: Thresholds,
    tie: Tie,
    f: impl Fn(Regime, f64) -> f64 + Clone + 'a,
) -> PiecewiseIntegrand<'a> {
    let breakpoints = if g > 0.0 {
        vec![th.d_plus / g, th.d_minus / g]
    } else {
        Vec::new()
    };
    let atom_f = f.clone();
    PiecewiseIntegrand::new(
        breakpoints,
        move |psi, rep| f(classify(rep * g, th, Tie::Closed), psi),
        move |psi| atom_f(classify(psi * g, th, tie), psi),
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedQuantities {
    pub consumption: f64,
    pub import: f64,
    pub export: f64,
    pub payment: f64,
    pub utility: f64,
}

impl ExpectedQuantities {
    pub fn net_demand(&self) -> f64 {
        self.import - self.export
    }

    /// Expected `U(d) - pi+ d+ + pi- d-`.
    pub fn surplus(&self) -> f64 {
        self.utility - self.payment
    }
}

/// Expected consumption, import, export, period payment and utility at
/// capacity `g` (generation `psi * g`).
pub fn expected_period_quantities<U: Utility + ?Sized>(
    u: &U,
    price: PeriodPrice,
    dist: &CapacityFactorDist,
    g: f64,
) -> Result<ExpectedQuantities> {
    let th = u.thresholds(price);
    let at = |pick: fn(&DispatchResult) -> f64| {
        let f = move |_: Regime, psi: f64| pick(&dispatch_generation(u, price, th, psi * g));
        expect(dist, &regime_integrand(g, th, Tie::Closed, f))
    };
    Ok(ExpectedQuantities {
        consumption: at(|d| d.consumption)?,
        import: at(|d| d.import)?,
        export: at(|d| d.export)?,
        payment: at(|d| d.period_payment)?,
        utility: at(|d| d.period_utility)?,
    })
}

/// Expected surplus `sum_t E[U_t - pi+ d+ + pi- d-] - c_g g - pi_c`.
pub fn surplus(scenario: &Scenario, g: f64, c_g: f64) -> Result<f64> {
    let mut total = -c_g * g - scenario.schedule.fixed_charge;
    for (t, p) in scenario.periods.iter().enumerate() {
        let price = scenario.price(t);
        let th = scenario.thresholds(t);
        let x_scale = p.effective_capacity(g);
        let u = &p.utility;
        let f = move |_: Regime, psi: f64| {
            let d = dispatch_generation(u, price, th, psi * x_scale);
            d.period_utility - d.period_payment
        };
        total += expect(&p.dist, &regime_integrand(x_scale, th, Tie::Closed, f))?;
    }
    Ok(total)
}
