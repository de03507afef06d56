//! Cross-module invariants on random inputs.

mod common;

use nem_sizer::dispatch::{optimal_dispatch, surplus};
use nem_sizer::scenario::{amortized_cost, PeriodModel, Scenario};
use nem_sizer::sensitivity::{
    central_difference, dg_dparam, net_demand_derivatives, payment_derivative, Parameter, COST_STEP, PRICE_STEP,
};
use nem_sizer::sizing::{
    flat_bound, linear_grid, marginal_value, marginal_value_curve, solve_capacity, Classification,
};
use nem_sizer::stochastic::{expect, CapacityFactorDist, PiecewiseIntegrand};
use nem_sizer::tariff::{PeriodId, PeriodPrice, ValidatedSchedule};
use proptest::prelude::*;

use common::{quad, random_scenario, rng};

#[test]
fn marginal_value_respects_price_bounds() {
    let mut r = rng(11);
    for _ in 0..20 {
        let s = random_scenario(&mut r, 3, true);
        let mean_energy: Vec<f64> = s
            .periods
            .iter()
            .map(|p| p.hours * expect(&p.dist, &PiecewiseIntegrand::smooth(|x| x)).unwrap())
            .collect();
        let upper: f64 = mean_energy
            .iter()
            .enumerate()
            .map(|(t, e)| s.price(t).import_price * e)
            .sum();
        let min_export = s
            .schedule
            .prices()
            .map(|p| p.export_price)
            .fold(f64::INFINITY, f64::min);
        let lower = min_export * mean_energy.iter().sum::<f64>();
        for g in linear_grid(0.0, 13.0, 26) {
            let f = marginal_value(&s, g).unwrap();
            assert!(
                f <= upper + 1e-9 && f >= lower - 1e-9,
                "F({g}) = {f} outside [{lower}, {upper}]"
            );
        }
        assert!((marginal_value(&s, 0.0).unwrap() - upper).abs() < 1e-9);
    }
}

#[test]
fn curve_is_weakly_decreasing() {
    let mut r = rng(12);
    for _ in 0..20 {
        let s = random_scenario(&mut r, 4, true);
        let curve = marginal_value_curve(&s, &linear_grid(0.0, 13.0, 100)).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
    }
}

#[test]
fn interior_solutions_meet_the_cost() {
    let mut r = rng(13);
    for _ in 0..30 {
        let s = random_scenario(&mut r, 3, true);
        let res = solve_capacity(&s).unwrap();
        assert!((0.0..=s.g_max).contains(&res.g_star));
        if res.classification == Classification::Interior {
            assert!((res.f_at_gstar - s.c_g).abs() <= 1e-6 * s.c_g);
            assert!(res.g_star >= flat_bound(&s).min(s.g_max));
        }
    }
}

#[test]
fn envelope_theorem_for_cost() {
    let mut r = rng(14);
    let mut checked = 0;
    while checked < 10 {
        let s = random_scenario(&mut r, 3, true);
        let res = solve_capacity(&s).unwrap();
        if res.classification != Classification::Interior {
            continue;
        }
        let fd = central_difference(&s, Parameter::PvCost, COST_STEP, |s| {
            let g = solve_capacity(s)?.g_star;
            surplus(s, g, s.c_g)
        })
        .unwrap();
        assert!(
            (fd + res.g_star).abs() <= 1e-4 * res.g_star.max(1.0),
            "{fd} vs {}",
            -res.g_star
        );
        checked += 1;
    }
}

#[test]
fn net_demand_decomposition_matches_finite_differences() {
    let mut r = rng(15);
    let mut checked = 0;
    while checked < 10 {
        let s = random_scenario(&mut r, 3, true);
        let res = solve_capacity(&s).unwrap();
        if res.classification != Classification::Interior {
            continue;
        }
        for p in [Parameter::ImportPrice(PeriodId(0)), Parameter::ExportPrice(PeriodId(1))] {
            if dg_dparam(&s, &res, p).unwrap().value.is_none() {
                continue;
            }
            let effects = net_demand_derivatives(&s, &res, p).unwrap();
            for (t, e) in effects.iter().enumerate() {
                let fd = central_difference(&s, p, PRICE_STEP, |s| {
                    let g = solve_capacity(s)?.g_star;
                    Ok(s.expected_quantities_at(t, g)?.net_demand())
                })
                .unwrap();
                assert!(
                    (e.total - fd).abs() <= 1e-3 * fd.abs().max(1.0),
                    "{p} t={t}: {} vs {fd}",
                    e.total
                );
                if t != p_period(p) {
                    assert_eq!(e.direct, 0.0);
                }
            }
            let pay = payment_derivative(&s, &res, p).unwrap();
            let fd = central_difference(&s, p, PRICE_STEP, |s| {
                let g = solve_capacity(s)?.g_star;
                Ok(s.totals_at(g)?.payment)
            })
            .unwrap();
            assert!((pay.total - fd).abs() <= 1e-3 * fd.abs().max(1.0));
        }
        checked += 1;
    }
}

fn p_period(p: Parameter) -> usize {
    match p {
        Parameter::ImportPrice(id) | Parameter::ExportPrice(id) => id.0,
        _ => usize::MAX,
    }
}

#[test]
fn corner_direct_effects() {
    // g* = 0: payment derivative is d+ + pi+ / U''(d+)
    let s = Scenario::single_period(
        quad(1.75, 0.7),
        PeriodPrice::new(0.35, 0.16),
        CapacityFactorDist::clipped_normal(0.2, 0.1, 1.0).unwrap(),
        1.0,
        13.0,
    )
    .unwrap();
    let res = solve_capacity(&s).unwrap();
    assert_eq!(res.classification, Classification::AtZero);
    let p = Parameter::ImportPrice(PeriodId(0));
    let pay = payment_derivative(&s, &res, p).unwrap();
    assert!((pay.total - (2.0 - 0.35 / 0.7)).abs() < 1e-9);
    let nd = net_demand_derivatives(&s, &res, p).unwrap();
    assert!((nd[0].direct + 1.0 / 0.7).abs() < 1e-9);
    assert_eq!(nd[0].pv, 0.0);
}

#[test]
fn export_price_increase_lowers_payment() {
    let mut r = rng(16);
    let mut checked = 0;
    while checked < 10 {
        let s = random_scenario(&mut r, 3, true);
        let res = solve_capacity(&s).unwrap();
        if res.classification != Classification::Interior {
            continue;
        }
        let pay = payment_derivative(&s, &res, Parameter::ExportPrice(PeriodId(0))).unwrap();
        assert!(pay.total <= 0.0 && pay.pv <= 0.0, "{pay:?}");
        let pay = payment_derivative(&s, &res, Parameter::AllExportPrices).unwrap();
        assert!(pay.total < 0.0 && pay.pv < 0.0, "{pay:?}");
        checked += 1;
    }
}

#[test]
fn zero_demand_period_exports_everything() {
    let sched =
        ValidatedSchedule::from_prices("z", 0.0, vec![PeriodPrice::new(0.35, 0.1), PeriodPrice::new(0.35, 0.1)]);
    let periods = vec![
        PeriodModel::new(quad(1.75, 0.7), CapacityFactorDist::PointMass(1.0)),
        PeriodModel::new(
            nem_sizer::utility::PeriodUtility::ZeroDemand,
            CapacityFactorDist::PointMass(1.0),
        ),
    ];
    let s = Scenario::new(sched, periods, 0.3, 13.0).unwrap();
    assert_eq!(flat_bound(&s), 0.0);
    // the zero-demand period earns the export price from the first kW
    assert!((marginal_value(&s, 0.0).unwrap() - 0.45).abs() < 1e-12);
    let q = s.expected_quantities_at(1, 2.0).unwrap();
    assert_eq!((q.consumption, q.import, q.export), (0.0, 0.0, 2.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dispatch_is_optimal_against_nearby_consumption(
        a in 0.3f64..3.0, b in 0.1f64..2.0, pp in 0.05f64..1.0, gap in 0.0f64..0.5,
        g in 0.0f64..10.0, psi in 0.0f64..1.0, dd in -0.5f64..0.5,
    ) {
        let u = nem_sizer::utility::QuadraticUtility::new(a, b).unwrap();
        let price = PeriodPrice::new(pp, (pp - gap - 1e-6).max(0.0));
        let d = optimal_dispatch(&u, price, g, psi);
        let x = g * psi;
        let value = |c: f64| {
            use nem_sizer::utility::Utility;
            u.value(c) - price.import_price * (c - x).max(0.0) + price.export_price * (x - c).max(0.0)
        };
        let alt = (d.consumption + dd).max(0.0);
        prop_assert!(value(d.consumption) >= value(alt) - 1e-12);
    }

    #[test]
    fn amortized_cost_is_monotone(c in 100.0f64..10000.0, rate in 0.001f64..0.2, n in 12u32..360) {
        let base = amortized_cost(c, rate, n, 1.0).unwrap();
        prop_assert!(amortized_cost(c, rate + 0.01, n, 1.0).unwrap() > base);
        prop_assert!(amortized_cost(c, rate, n + 12, 1.0).unwrap() < base);
        prop_assert!(base > 12.0 * c / n as f64);
    }
}
