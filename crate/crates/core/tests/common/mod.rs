//! Random scenario generators shared by the integration tests.
#![allow(dead_code)]

use nem_sizer::scenario::{PeriodModel, Scenario};
use nem_sizer::sizing::{flat_bound, marginal_value, solve_capacity, Classification};
use nem_sizer::stochastic::{task_rng, CapacityFactorDist};
use nem_sizer::tariff::{PeriodPrice, ValidatedSchedule};
use nem_sizer::utility::{PeriodUtility, QuadraticUtility, Utility};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    task_rng(seed, 0)
}

pub fn quad(a: f64, b: f64) -> PeriodUtility {
    PeriodUtility::Quadratic(QuadraticUtility::new(a, b).unwrap())
}

/// Random period: utility, prices with a gap of at least 0.02, clipped
/// normal capacity factor and an energy scale.
pub fn random_period(rng: &mut ChaCha8Rng, hours: bool) -> (PeriodModel, PeriodPrice) {
    let import: f64 = rng.random_range(0.15..0.6);
    let export = import - rng.random_range(0.02..import.min(0.3));
    let a = import + rng.random_range(0.3..2.0);
    let b = rng.random_range(0.2..1.5);
    let mu = rng.random_range(0.1..0.7);
    let sigma = rng.random_range(0.05..0.3);
    let dist = CapacityFactorDist::clipped_normal(mu, sigma, 1.0).unwrap();
    let mut model = PeriodModel::new(quad(a, b), dist);
    if hours {
        model.hours = rng.random_range(1.0..4.0);
    }
    (model, PeriodPrice::new(import, export))
}

/// Scenario with `n` random periods; the PV cost is placed between F at
/// the flat bound and F at `g_max`, so the solution is usually interior.
pub fn random_scenario(rng: &mut ChaCha8Rng, n: usize, hours: bool) -> Scenario {
    let (periods, prices): (Vec<_>, Vec<_>) = (0..n).map(|_| random_period(rng, hours)).unzip();
    let schedule = ValidatedSchedule::from_prices("random", rng.random_range(0.0..5.0), prices);
    let g_max = 13.0;
    let mut s = Scenario::new(schedule, periods, 1.0, g_max).unwrap();
    let fb = flat_bound(&s).min(g_max);
    let hi = marginal_value(&s, fb).unwrap();
    let lo = marginal_value(&s, g_max).unwrap();
    s.c_g = lo + rng.random_range(0.15..0.85) * (hi - lo);
    s
}

/// Random scenario with an interior optimum at which every period can
/// reach all three regimes.
pub fn random_interior_all_regimes(rng: &mut ChaCha8Rng, n: usize) -> Scenario {
    loop {
        let s = random_scenario(rng, n, true);
        let r = solve_capacity(&s).unwrap();
        if r.classification != Classification::Interior {
            continue;
        }
        let reachable = (0..s.len()).all(|t| {
            let p = &s.periods[t];
            let th = p.utility.thresholds(s.price(t));
            p.hours * p.dist.psi_max() * r.g_star > th.d_minus * 1.05 && th.d_plus > 0.0
        });
        if reachable {
            return s;
        }
    }
}
