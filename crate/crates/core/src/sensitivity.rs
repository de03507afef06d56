//! Comparative statics of the optimal capacity, net demand and payment.
//!
//! Analytic derivatives follow from the implicit function theorem applied
//! to `F(g; theta) = c_g`; a finite-difference harness checks them and
//! produces the qualitative sign table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dispatch::{dispatch_generation, DispatchResult, Regime, Tie};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::sizing::{
    marginal_value, marginal_value_slope, regime_moment, solve_capacity, Classification, InvestmentResult, COST_TOL,
};
use crate::tariff::{PeriodId, PerturbScope};
use crate::utility::Utility;

/// Finite-difference step for prices, $/kWh.
pub const PRICE_STEP: f64 = 1e-4;
/// Finite-difference step for the PV cost, $/kW.
pub const COST_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "period")]
pub enum Parameter {
    ImportPrice(PeriodId),
    ExportPrice(PeriodId),
    /// Same shift of every import price.
    AllImportPrices,
    /// Same shift of every export price.
    AllExportPrices,
    PvCost,
}

impl Parameter {
    pub fn is_price(self) -> bool {
        self != Parameter::PvCost
    }

    /// Default finite-difference step.
    pub fn step(self) -> f64 {
        if self.is_price() {
            PRICE_STEP
        } else {
            COST_STEP
        }
    }

    /// Scenario with the parameter shifted by `delta`.
    pub fn shifted(self, scenario: &Scenario, delta: f64) -> Result<Scenario> {
        match self {
            Parameter::ImportPrice(id) => scenario.perturbed(delta, 0.0, PerturbScope::Period(id)),
            Parameter::ExportPrice(id) => scenario.perturbed(0.0, delta, PerturbScope::Period(id)),
            Parameter::AllImportPrices => scenario.perturbed(delta, 0.0, PerturbScope::All),
            Parameter::AllExportPrices => scenario.perturbed(0.0, delta, PerturbScope::All),
            Parameter::PvCost => {
                let c = scenario.c_g + delta;
                if c < 0.0 {
                    return Err(Error::invalid("c_g", format!("shifted cost {c} is negative")));
                }
                Ok(scenario.with_cost(c))
            }
        }
    }

    /// Whether a change of the parameter moves the prices of period `t`,
    /// and in which direction (import or export).
    fn touches(self, t: usize) -> Option<Regime> {
        match self {
            Parameter::ImportPrice(id) if id.0 == t => Some(Regime::Import),
            Parameter::AllImportPrices => Some(Regime::Import),
            Parameter::ExportPrice(id) if id.0 == t => Some(Regime::Export),
            Parameter::AllExportPrices => Some(Regime::Export),
            _ => None,
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parameter::ImportPrice(id) => write!(f, "import_price({id})"),
            Parameter::ExportPrice(id) => write!(f, "export_price({id})"),
            Parameter::AllImportPrices => write!(f, "import_price(all)"),
            Parameter::AllExportPrices => write!(f, "export_price(all)"),
            Parameter::PvCost => write!(f, "pv_cost"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeCase {
    /// Corner solution strictly inside the cost bounds: no response.
    Bounds,
    Interior,
    /// Cost equal to F(0) or F(g_max): one side jumps to the corner.
    EntryExit,
    /// An atom of some capacity factor sits exactly on a threshold.
    Kink,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub parameter: Parameter,
    pub case: DerivativeCase,
    /// Two-sided derivative, when it exists and is finite.
    pub value: Option<f64>,
    pub left: f64,
    pub right: f64,
    /// Set when the net-zero curvature term vanishes at the solution.
    pub infinite: bool,
}

impl DerivativeReport {
    fn smooth(parameter: Parameter, case: DerivativeCase, v: f64) -> Self {
        Self {
            parameter,
            case,
            value: v.is_finite().then_some(v),
            left: v,
            right: v,
            infinite: !v.is_finite(),
        }
    }

    /// The two-sided value, or the right derivative at non-smooth points.
    pub fn directional(&self) -> f64 {
        self.value.unwrap_or(self.right)
    }
}

/// dF/dtheta at `g` for a price parameter.
fn price_partial(scenario: &Scenario, parameter: Parameter, g: f64, tie: Tie) -> Result<f64> {
    let mut total = 0.0;
    for (t, p) in scenario.periods.iter().enumerate() {
        if let Some(regime) = parameter.touches(t) {
            if p.is_generating() {
                total += p.hours * regime_moment(scenario, t, g, regime, 1, tie)?;
            }
        }
    }
    Ok(total)
}

/// dg/dtheta from the implicit function theorem with one-sided regime rules.
fn implicit_derivative(scenario: &Scenario, parameter: Parameter, g: f64, tie: Tie) -> Result<f64> {
    let slope = marginal_value_slope(scenario, g, tie)?;
    let numerator = if parameter.is_price() {
        -price_partial(scenario, parameter, g, tie)?
    } else {
        1.0
    };
    if slope == 0.0 {
        return Ok(if numerator == 0.0 {
            0.0
        } else {
            // F is locally flat in g, so the root jumps
            f64::INFINITY.copysign(-numerator)
        });
    }
    Ok(numerator / slope)
}

fn at_kink(scenario: &Scenario, g: f64) -> bool {
    scenario.periods.iter().enumerate().any(|(t, p)| {
        if !p.is_generating() {
            return false;
        }
        let th = scenario.thresholds(t);
        p.dist.atoms().into_iter().any(|(psi, mass)| {
            let x = p.hours * psi * g;
            mass > 0.0
                && psi > 0.0
                && [th.d_plus, th.d_minus]
                    .iter()
                    .any(|d| (x - d).abs() <= 1e-9 * d.max(1.0))
        })
    })
}

/// Derivative of the optimal capacity with respect to `parameter`.
pub fn dg_dparam(scenario: &Scenario, result: &InvestmentResult, parameter: Parameter) -> Result<DerivativeReport> {
    let c = result.c_g;
    let f0 = marginal_value(scenario, 0.0)?;
    let f_max = marginal_value(scenario, scenario.g_max)?;
    let entry = (c - f0).abs() <= COST_TOL;
    let exit = !entry && (c - f_max).abs() <= COST_TOL;

    if entry || exit {
        // prices raise F and the cost lowers the margin, so a price
        // increase acts like a cost decrease
        let at = if entry { result.interval[1] } else { scenario.g_max };
        let tie = if entry { Tie::Up } else { Tie::Down };
        let d = implicit_derivative(scenario, parameter, at, tie)?;
        // entry: prices up and cost down move into the interior
        // exit: prices down and cost up move into the interior
        let interior_is_right = entry == parameter.is_price();
        let (left, right) = if interior_is_right { (0.0, d) } else { (d, 0.0) };
        return Ok(DerivativeReport {
            parameter,
            case: DerivativeCase::EntryExit,
            value: None,
            left,
            right,
            infinite: !d.is_finite(),
        });
    }

    match result.classification {
        Classification::AtZero | Classification::AtMax => {
            Ok(DerivativeReport::smooth(parameter, DerivativeCase::Bounds, 0.0))
        }
        Classification::SetValued => Err(Error::Numerical(format!(
            "set-valued solution with cost {c} away from F(0) = {f0}"
        ))),
        Classification::Interior => {
            let g = result.g_star;
            if at_kink(scenario, g) {
                // prices up push generation into the next regime, cost up
                // pulls it back
                let (left_tie, right_tie) = if parameter.is_price() {
                    (Tie::Down, Tie::Up)
                } else {
                    (Tie::Up, Tie::Down)
                };
                let left = implicit_derivative(scenario, parameter, g, left_tie)?;
                let right = implicit_derivative(scenario, parameter, g, right_tie)?;
                Ok(DerivativeReport {
                    parameter,
                    case: DerivativeCase::Kink,
                    value: None,
                    left,
                    right,
                    infinite: !left.is_finite() || !right.is_finite(),
                })
            } else {
                let d = implicit_derivative(scenario, parameter, g, Tie::Closed)?;
                Ok(DerivativeReport::smooth(parameter, DerivativeCase::Interior, d))
            }
        }
    }
}

/// Direct (within-period) and PV (through capacity) parts of a derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EffectDecomposition {
    pub direct: f64,
    pub pv: f64,
    pub total: f64,
}

impl EffectDecomposition {
    fn new(direct: f64, pv: f64) -> Self {
        Self {
            direct,
            pv,
            total: direct + pv,
        }
    }
}

fn tie_for(report: &DerivativeReport) -> Tie {
    if report.value.is_some() {
        Tie::Closed
    } else {
        Tie::Up
    }
}

/// Regime probability of period `t` at capacity `g`.
fn regime_probability(scenario: &Scenario, t: usize, g: f64, regime: Regime, tie: Tie) -> f64 {
    let p = &scenario.periods[t];
    p.dist
        .regime_probabilities(p.effective_capacity(g), scenario.thresholds(t), tie)
        .get(regime)
}

/// Derivative of expected net demand in period `t`, split into the direct
/// effect of the price change and the PV effect through `dg*/dtheta`.
///
/// At non-smooth points the right derivative is used.
pub fn net_demand_derivative(
    scenario: &Scenario,
    result: &InvestmentResult,
    parameter: Parameter,
    t: PeriodId,
) -> Result<EffectDecomposition> {
    let report = dg_dparam(scenario, result, parameter)?;
    net_demand_effect(scenario, result.g_star, &report, t.0)
}

/// [`net_demand_derivative`] for every period.
pub fn net_demand_derivatives(
    scenario: &Scenario,
    result: &InvestmentResult,
    parameter: Parameter,
) -> Result<Vec<EffectDecomposition>> {
    let report = dg_dparam(scenario, result, parameter)?;
    (0..scenario.len())
        .map(|t| net_demand_effect(scenario, result.g_star, &report, t))
        .collect()
}

fn net_demand_effect(scenario: &Scenario, g: f64, report: &DerivativeReport, t: usize) -> Result<EffectDecomposition> {
    let tie = tie_for(report);
    let price = scenario.price(t);
    let u = &scenario.periods[t].utility;
    let direct = match report.parameter.touches(t) {
        Some(Regime::Import) => {
            regime_probability(scenario, t, g, Regime::Import, tie) * u.demand_slope(price.import_price)
        }
        Some(_) => regime_probability(scenario, t, g, Regime::Export, tie) * u.demand_slope(price.export_price),
        None => 0.0,
    };
    let dg = report.directional();
    let pv = if dg == 0.0 || !scenario.periods[t].is_generating() {
        0.0
    } else {
        let traded = regime_moment(scenario, t, g, Regime::Import, 1, tie)?
            + regime_moment(scenario, t, g, Regime::Export, 1, tie)?;
        -scenario.periods[t].hours * traded * dg
    };
    Ok(EffectDecomposition::new(direct, pv))
}

/// Derivative of the total expected payment.
///
/// At non-smooth points the right derivative is used.
pub fn payment_derivative(
    scenario: &Scenario,
    result: &InvestmentResult,
    parameter: Parameter,
) -> Result<EffectDecomposition> {
    let report = dg_dparam(scenario, result, parameter)?;
    let tie = tie_for(&report);
    let g = result.g_star;
    let dg = report.directional();
    let mut direct = 0.0;
    let mut exposure = 0.0;
    for t in 0..scenario.len() {
        let price = scenario.price(t);
        let p = &scenario.periods[t];
        match parameter.touches(t) {
            Some(Regime::Import) => {
                let q = scenario.expected_quantities_at(t, g)?;
                direct += q.import
                    + price.import_price
                        * regime_probability(scenario, t, g, Regime::Import, tie)
                        * p.utility.demand_slope(price.import_price);
            }
            Some(_) => {
                let q = scenario.expected_quantities_at(t, g)?;
                direct += -q.export
                    + price.export_price
                        * regime_probability(scenario, t, g, Regime::Export, tie)
                        * p.utility.demand_slope(price.export_price);
            }
            None => {}
        }
        if dg != 0.0 && p.is_generating() {
            exposure += p.hours
                * (price.import_price * regime_moment(scenario, t, g, Regime::Import, 1, tie)?
                    + price.export_price * regime_moment(scenario, t, g, Regime::Export, 1, tie)?);
        }
    }
    let pv = if dg == 0.0 { 0.0 } else { -exposure * dg };
    Ok(EffectDecomposition::new(direct, pv))
}

/// Central finite difference of `quantity(scenario')` in `parameter`.
pub fn central_difference(
    scenario: &Scenario,
    parameter: Parameter,
    h: f64,
    quantity: impl Fn(&Scenario) -> Result<f64>,
) -> Result<f64> {
    let up = quantity(&parameter.shifted(scenario, h)?)?;
    let down = quantity(&parameter.shifted(scenario, -h)?)?;
    Ok((up - down) / (2.0 * h))
}

/// Central finite difference of the optimal capacity.
pub fn fd_capacity(scenario: &Scenario, parameter: Parameter, h: f64) -> Result<f64> {
    central_difference(scenario, parameter, h, |s| Ok(solve_capacity(s)?.g_star))
}

// ---------------------------------------------------------------------------
// Sign table

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Up,
    Down,
    Zero,
    Indeterminate,
}

impl Sign {
    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Up => "↑",
            Sign::Down => "↓",
            Sign::Zero => "−",
            Sign::Indeterminate => "X",
        }
    }

    fn of(v: f64, tol: f64) -> Sign {
        if v.abs() <= tol {
            Sign::Zero
        } else if v > 0.0 {
            Sign::Up
        } else {
            Sign::Down
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignVariable {
    /// Consumption in the perturbed period.
    ConsumptionTau,
    NetDemandTau,
    /// Consumption in another period.
    ConsumptionOther,
    NetDemandOther,
    Payment,
    Surplus,
}

impl SignVariable {
    pub const ALL: [SignVariable; 6] = [
        SignVariable::ConsumptionTau,
        SignVariable::NetDemandTau,
        SignVariable::ConsumptionOther,
        SignVariable::NetDemandOther,
        SignVariable::Payment,
        SignVariable::Surplus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SignVariable::ConsumptionTau => "d_tau",
            SignVariable::NetDemandTau => "net_demand_tau",
            SignVariable::ConsumptionOther => "d_t",
            SignVariable::NetDemandOther => "net_demand_t",
            SignVariable::Payment => "payment",
            SignVariable::Surplus => "surplus",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignParameter {
    PvCost,
    ImportPrice,
    ExportPrice,
}

impl SignParameter {
    pub const ALL: [SignParameter; 3] = [
        SignParameter::PvCost,
        SignParameter::ImportPrice,
        SignParameter::ExportPrice,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SignParameter::PvCost => "c_g",
            SignParameter::ImportPrice => "import_price_tau",
            SignParameter::ExportPrice => "export_price_tau",
        }
    }

    fn parameter(self, tau: PeriodId) -> Parameter {
        match self {
            SignParameter::PvCost => Parameter::PvCost,
            SignParameter::ImportPrice => Parameter::ImportPrice(tau),
            SignParameter::ExportPrice => Parameter::ExportPrice(tau),
        }
    }
}

/// Expected sign of a cell; `None` for cells the table leaves blank.
pub fn expected_sign(variable: SignVariable, parameter: SignParameter, regime: Regime) -> Option<Sign> {
    use Sign::{Down as D, Indeterminate as X, Up as U, Zero as Z};
    let r = match regime {
        Regime::Import => 0,
        Regime::NetZero => 1,
        Regime::Export => 2,
    };
    let row: [[Option<Sign>; 3]; 3] = match variable {
        SignVariable::ConsumptionTau => [
            [Some(Z), Some(D), Some(Z)],
            [Some(D), Some(U), Some(Z)],
            [Some(Z), Some(U), Some(D)],
        ],
        SignVariable::NetDemandTau => [
            [Some(U), Some(Z), Some(U)],
            [Some(D), Some(Z), Some(D)],
            [Some(D), Some(Z), Some(D)],
        ],
        SignVariable::ConsumptionOther => [[None; 3], [Some(Z), Some(U), Some(Z)], [Some(Z), Some(U), Some(Z)]],
        SignVariable::NetDemandOther => [[None; 3], [Some(D), Some(Z), Some(D)], [Some(D), Some(Z), Some(D)]],
        SignVariable::Payment => [
            [Some(U), Some(Z), Some(U)],
            [Some(X), Some(Z), Some(D)],
            [Some(D), Some(Z), Some(D)],
        ],
        SignVariable::Surplus => [
            [Some(D), Some(D), Some(D)],
            [Some(X), Some(U), Some(U)],
            [Some(U), Some(U), Some(U)],
        ],
    };
    let p = match parameter {
        SignParameter::PvCost => 0,
        SignParameter::ImportPrice => 1,
        SignParameter::ExportPrice => 2,
    };
    row[p][r]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellStatus {
    Match,
    Mismatch,
    /// Indeterminate in theory; the empirical sign is only reported.
    Reported,
    /// A regime changed inside the difference stencil.
    NonLocal,
    /// The regime cannot be reached or the solution is not interior.
    Unchecked,
    /// The table has no entry for this cell.
    Blank,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignCell {
    pub variable: SignVariable,
    pub parameter: SignParameter,
    pub regime: Regime,
    pub expected: Option<Sign>,
    pub empirical: Option<Sign>,
    pub derivative: Option<f64>,
    pub status: CellStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignTable {
    pub tau: PeriodId,
    pub other: Option<PeriodId>,
    pub g_star: f64,
    pub cells: Vec<SignCell>,
}

impl SignTable {
    pub fn mismatches(&self) -> impl Iterator<Item = &SignCell> {
        self.cells.iter().filter(|c| c.status == CellStatus::Mismatch)
    }

    pub fn checked(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.status, CellStatus::Match | CellStatus::Mismatch))
            .count()
    }
}

/// A capacity-factor realization placing period `t` in the middle of
/// `regime` at capacity `g`, if that regime is reachable.
fn psi_in_regime(scenario: &Scenario, t: usize, g: f64, regime: Regime) -> Option<f64> {
    let p = &scenario.periods[t];
    let x_scale = p.effective_capacity(g);
    if !p.is_generating() || x_scale <= 0.0 {
        return None;
    }
    let th = scenario.thresholds(t);
    let top = p.dist.psi_max();
    let (lo, hi) = match regime {
        Regime::Import => (0.0, th.d_plus / x_scale),
        Regime::NetZero => (th.d_plus / x_scale, th.d_minus / x_scale),
        Regime::Export => (th.d_minus / x_scale, top),
    };
    let hi = hi.min(top);
    (hi - lo > 1e-6 * top).then_some(0.5 * (lo + hi))
}

struct Realized {
    dispatch: Vec<DispatchResult>,
}

fn realize(scenario: &Scenario, g: f64, psi: &[f64]) -> Realized {
    let dispatch = psi
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            let p = &scenario.periods[t];
            dispatch_generation(&p.utility, scenario.price(t), scenario.thresholds(t), p.hours * v * g)
        })
        .collect();
    Realized { dispatch }
}

fn value_of(variable: SignVariable, r: &Realized, tau: usize, other: usize, regime: Regime) -> f64 {
    let in_regime = || r.dispatch.iter().filter(move |d| d.regime == regime);
    match variable {
        SignVariable::ConsumptionTau => r.dispatch[tau].consumption,
        SignVariable::NetDemandTau => r.dispatch[tau].net_demand(),
        SignVariable::ConsumptionOther => r.dispatch[other].consumption,
        SignVariable::NetDemandOther => r.dispatch[other].net_demand(),
        SignVariable::Payment => in_regime().map(|d| d.period_payment).sum(),
        SignVariable::Surplus => in_regime().map(|d| d.period_utility - d.period_payment).sum(),
    }
}

/// Empirical signs of the realized responses to `c_g`, `pi+_tau` and
/// `pi-_tau`, by regime, next to the qualitative predictions.
///
/// For each regime every generating period is placed at a capacity-factor
/// realization in the middle of that regime; the optimal capacity is
/// re-solved at `theta +- h` and the realized quantities are differenced at
/// the fixed realization. Payment and surplus rows sum over the periods in
/// the regime.
pub fn sign_table(scenario: &Scenario, tau: PeriodId) -> Result<SignTable> {
    let base = solve_capacity(scenario)?;
    let g = base.g_star;
    let other = (0..scenario.len()).find(|&t| t != tau.0 && scenario.periods[t].is_generating());
    let interior = base.classification == Classification::Interior;

    let mut cells = Vec::new();
    for parameter in SignParameter::ALL {
        let param = parameter.parameter(tau);
        let h = param.step();
        let shifted = if interior {
            let up = param.shifted(scenario, h)?;
            let down = param.shifted(scenario, -h)?;
            let g_up = solve_capacity(&up)?;
            let g_down = solve_capacity(&down)?;
            let smooth =
                g_up.classification == Classification::Interior && g_down.classification == Classification::Interior;
            smooth.then_some((up, g_up.g_star, down, g_down.g_star))
        } else {
            None
        };

        for regime in Regime::ALL {
            let psi: Option<Vec<f64>> = (0..scenario.len())
                .map(|t| {
                    if scenario.periods[t].is_generating() {
                        psi_in_regime(scenario, t, g, regime)
                    } else {
                        Some(0.0)
                    }
                })
                .collect();
            for variable in SignVariable::ALL {
                let expected = expected_sign(variable, parameter, regime);
                let mut cell = SignCell {
                    variable,
                    parameter,
                    regime,
                    expected,
                    empirical: None,
                    derivative: None,
                    status: CellStatus::Unchecked,
                };
                let needs_other = matches!(variable, SignVariable::ConsumptionOther | SignVariable::NetDemandOther);
                match (&psi, &shifted, other) {
                    _ if expected.is_none() => cell.status = CellStatus::Blank,
                    (Some(psi), Some((up, g_up, down, g_down)), other) if !needs_other || other.is_some() => {
                        let other = other.unwrap_or(tau.0);
                        let r_up = realize(up, *g_up, psi);
                        let r_down = realize(down, *g_down, psi);
                        let r_mid = realize(scenario, g, psi);
                        let stable = [&r_up, &r_down].iter().all(|r| {
                            r.dispatch
                                .iter()
                                .zip(&r_mid.dispatch)
                                .all(|(a, b)| a.regime == b.regime)
                        });
                        if !stable {
                            cell.status = CellStatus::NonLocal;
                        } else {
                            let v_up = value_of(variable, &r_up, tau.0, other, regime);
                            let v_down = value_of(variable, &r_down, tau.0, other, regime);
                            let v_mid = value_of(variable, &r_mid, tau.0, other, regime);
                            let d = (v_up - v_down) / (2.0 * h);
                            // rounding noise of the difference quotient
                            let sign = Sign::of(d, 1e-9 * v_mid.abs().max(1.0) / h);
                            cell.derivative = Some(d);
                            cell.empirical = Some(sign);
                            cell.status = match expected {
                                Some(Sign::Indeterminate) => CellStatus::Reported,
                                Some(e) if e == sign => CellStatus::Match,
                                _ => CellStatus::Mismatch,
                            };
                        }
                    }
                    _ => {}
                }
                cells.push(cell);
            }
        }
    }
    Ok(SignTable {
        tau,
        other: other.map(PeriodId),
        g_star: g,
        cells,
    })
}
