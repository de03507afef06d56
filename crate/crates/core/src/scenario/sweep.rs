//! Grid sweep over uniform import/export price shifts.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{io::write_table, Scenario};
use crate::error::{Error, Result};
use crate::sizing::{solve_capacity, InvestmentResult};
use crate::tariff::PerturbScope;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepConfig {
    /// Range of the import price shift, $/kWh.
    pub dpi_plus: (f64, f64),
    /// Range of the export price shift, $/kWh.
    pub dpi_minus: (f64, f64),
    pub grid_n: usize,
    /// Also evaluate every cell at the unperturbed optimal capacity.
    pub fixed_capacity_baseline: bool,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dpi_plus: (0.0, 0.15),
            dpi_minus: (-0.15, 0.0),
            grid_n: 16,
            fixed_capacity_baseline: true,
            jobs: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub dpi_plus: f64,
    pub dpi_minus: f64,
    pub g_star: f64,
    pub net_demand_endog: f64,
    pub net_demand_fixed: f64,
    pub payment_endog: f64,
    pub payment_fixed: f64,
    /// False when the shift inverts some period's prices.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepGrid {
    pub baseline: InvestmentResult,
    /// Capacity used for the fixed-capacity columns.
    pub g_fixed: f64,
    pub grid_n: usize,
    /// Row-major: import shift outer, export shift inner.
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, i: usize, j: usize) -> &SweepCell {
        &self.cells[i * self.grid_n + j]
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let header = [
            "dpi_plus",
            "dpi_minus",
            "g_star",
            "net_demand_endog",
            "net_demand_fixed",
            "payment_endog",
            "payment_fixed",
            "valid_flag",
        ];
        let rows = self.cells.iter().map(|c| {
            vec![
                c.dpi_plus,
                c.dpi_minus,
                c.g_star,
                c.net_demand_endog,
                c.net_demand_fixed,
                c.payment_endog,
                c.payment_fixed,
                if c.valid { 1.0 } else { 0.0 },
            ]
        });
        write_table(w, &header, rows)
    }
}

fn axis(range: (f64, f64), n: usize, i: usize) -> f64 {
    if i + 1 == n {
        range.1
    } else {
        range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
    }
}

fn evaluate(scenario: &Scenario, g_fixed: Option<f64>, dpi_plus: f64, dpi_minus: f64) -> Result<SweepCell> {
    let mut cell = SweepCell {
        dpi_plus,
        dpi_minus,
        g_star: f64::NAN,
        net_demand_endog: f64::NAN,
        net_demand_fixed: f64::NAN,
        payment_endog: f64::NAN,
        payment_fixed: f64::NAN,
        valid: false,
    };
    let shifted = match scenario.perturbed(dpi_plus, dpi_minus, PerturbScope::All) {
        Ok(s) => s,
        Err(e) if !e.is_numerical() => return Ok(cell),
        Err(e) => return Err(e),
    };
    let g = solve_capacity(&shifted)?.g_star;
    let endog = shifted.totals_at(g)?;
    cell.g_star = g;
    cell.net_demand_endog = endog.net_demand;
    cell.payment_endog = endog.payment;
    if let Some(g_fixed) = g_fixed {
        let fixed = shifted.totals_at(g_fixed)?;
        cell.net_demand_fixed = fixed.net_demand;
        cell.payment_fixed = fixed.payment;
    }
    cell.valid = true;
    Ok(cell)
}

/// Re-solves the capacity on a `grid_n x grid_n` grid of uniform price
/// shifts and reports expected totals at the new optimum and, optionally,
/// at the unperturbed optimum.
pub fn run_sweep(scenario: &Scenario, config: &SweepConfig) -> Result<SweepGrid> {
    if config.grid_n < 2 {
        return Err(Error::invalid(
            "grid_n",
            format!("need at least 2 points, got {}", config.grid_n),
        ));
    }
    let finite = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite();
    if !finite(config.dpi_plus) || !finite(config.dpi_minus) {
        return Err(Error::invalid("range", "sweep ranges must be finite"));
    }
    let baseline = solve_capacity(scenario)?;
    let g_fixed = baseline.g_star;
    let n = config.grid_n;
    let run = || -> Result<Vec<SweepCell>> {
        (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                evaluate(
                    scenario,
                    config.fixed_capacity_baseline.then_some(g_fixed),
                    axis(config.dpi_plus, n, i),
                    axis(config.dpi_minus, n, j),
                )
            })
            .collect()
    };
    let cells = match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(SweepGrid {
        baseline,
        g_fixed,
        grid_n: n,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::PeriodModel;
    use crate::stochastic::CapacityFactorDist;
    use crate::tariff::{PeriodPrice, ValidatedSchedule};
    use crate::utility::{PeriodUtility, QuadraticUtility};

    fn scenario() -> Scenario {
        let sched = ValidatedSchedule::from_prices(
            "t",
            5.0,
            vec![PeriodPrice::new(0.35, 0.16), PeriodPrice::new(0.30, 0.1)],
        );
        let u = PeriodUtility::Quadratic(QuadraticUtility::new(1.75, 0.7).unwrap());
        let periods = vec![
            PeriodModel::new(u, CapacityFactorDist::clipped_normal(0.3, 0.2, 1.0).unwrap()),
            PeriodModel::new(u, CapacityFactorDist::clipped_normal(0.2, 0.1, 1.0).unwrap()),
        ];
        Scenario::new(sched, periods, 0.12, 13.0).unwrap()
    }

    #[test]
    fn baseline_cell_matches_solver() {
        let s = scenario();
        let grid = run_sweep(
            &s,
            &SweepConfig {
                grid_n: 4,
                dpi_minus: (0.0, 0.1),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(grid.cells.len(), 16);
        let c = grid.cell(0, 0);
        assert_eq!((c.dpi_plus, c.dpi_minus), (0.0, 0.0));
        assert_eq!(c.g_star, solve_capacity(&s).unwrap().g_star);
        assert_eq!(c.net_demand_endog, c.net_demand_fixed);
        assert_eq!(c.payment_endog, c.payment_fixed);
        // export shift of +0.1 inverts nothing; +0.1 on 0.16 stays below 0.35
        assert!(grid.cells.iter().all(|c| c.valid));
    }

    #[test]
    fn monotone_columns_and_invalid_cells() {
        let s = scenario();
        let grid = run_sweep(
            &s,
            &SweepConfig {
                grid_n: 5,
                dpi_plus: (0.0, 0.1),
                dpi_minus: (-0.1, 0.3),
                ..Default::default()
            },
        )
        .unwrap();
        for j in 0..5 {
            for i in 1..5 {
                let (a, b) = (grid.cell(i - 1, j), grid.cell(i, j));
                if a.valid && b.valid {
                    assert!(b.g_star >= a.g_star - 1e-9);
                }
            }
        }
        // +0.3 on exports inverts the second period
        assert!(!grid.cell(0, 4).valid);
        assert!(grid.cell(0, 4).g_star.is_nan());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let s = scenario();
        let cfg = SweepConfig {
            grid_n: 3,
            ..Default::default()
        };
        let a = run_sweep(&s, &SweepConfig { jobs: Some(1), ..cfg }).unwrap();
        let b = run_sweep(&s, &SweepConfig { jobs: Some(4), ..cfg }).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }
}
