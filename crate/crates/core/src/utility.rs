//! Per-period consumption utility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tariff::PeriodPrice;

/// A concave utility of consumption within one settlement period.
///
/// Dispatch and sizing only touch utilities through this trait.
pub trait Utility {
    fn value(&self, d: f64) -> f64;
    /// U'(d)
    fn marginal(&self, d: f64) -> f64;
    /// U''(d), strictly negative.
    fn curvature(&self, d: f64) -> f64;
    /// Consumption where marginal utility equals `price`, clamped at zero.
    fn demand_at(&self, price: f64) -> f64;

    fn thresholds(&self, price: PeriodPrice) -> Thresholds {
        let th = Thresholds {
            d_plus: self.demand_at(price.import_price),
            d_minus: self.demand_at(price.export_price),
        };
        debug_assert!(th.d_plus <= th.d_minus);
        th
    }

    /// Derivative of the threshold `demand_at(price)` with respect to `price`.
    /// Zero once the price is at or above the choke price.
    fn demand_slope(&self, price: f64) -> f64 {
        let d = self.demand_at(price);
        if d > 0.0 {
            1.0 / self.curvature(d)
        } else {
            0.0
        }
    }
}

/// Import and export thresholds `d+ <= d-` of the dispatch regimes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub d_plus: f64,
    pub d_minus: f64,
}

/// U(d) = a d - b d^2 / 2, i.e. linear inverse demand p = a - b d.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticUtility {
    /// Choke price, $/kWh.
    pub a: f64,
    /// Slope of inverse demand, $/kWh^2.
    pub b: f64,
}

impl QuadraticUtility {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid("a", format!("must be positive and finite, got {a}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid("b", format!("must be positive and finite, got {b}")));
        }
        Ok(Self { a, b })
    }

    /// Satiation point a/b.
    pub fn d_max(&self) -> f64 {
        self.a / self.b
    }

    /// Utility at consumption `d >= 0`.
    pub fn utility(&self, d: f64) -> Result<f64> {
        if d < 0.0 {
            return Err(Error::invalid(
                "d",
                format!("consumption must be non-negative, got {d}"),
            ));
        }
        Ok(self.value(d))
    }

    /// max(0, (a - price) / b)
    pub fn inverse_demand(&self, price: f64) -> f64 {
        ((self.a - price) / self.b).max(0.0)
    }

    /// True when `price` is at or above the choke price and demand is clamped to zero.
    pub fn is_choked(&self, price: f64) -> bool {
        price >= self.a
    }
}

impl Utility for QuadraticUtility {
    fn value(&self, d: f64) -> f64 {
        self.a * d - 0.5 * self.b * d * d
    }

    fn marginal(&self, d: f64) -> f64 {
        self.a - self.b * d
    }

    fn curvature(&self, _d: f64) -> f64 {
        -self.b
    }

    fn demand_at(&self, price: f64) -> f64 {
        self.inverse_demand(price)
    }
}

/// Linear demand through `(pi0, d0)` with point elasticity `elasticity` there.
///
/// b = -pi0 / (elasticity d0), a = pi0 + b d0 = pi0 (1 - 1/elasticity).
pub fn calibrate(d0: f64, pi0: f64, elasticity: f64) -> Result<QuadraticUtility> {
    if !(d0 > 0.0 && d0.is_finite()) {
        return Err(Error::invalid(
            "d0",
            format!("anchor consumption must be positive, got {d0}"),
        ));
    }
    if !(pi0 > 0.0 && pi0.is_finite()) {
        return Err(Error::invalid(
            "pi0",
            format!("anchor price must be positive, got {pi0}"),
        ));
    }
    if elasticity == 0.0 {
        return Err(Error::invalid("elasticity", "zero elasticity gives an infinite slope"));
    }
    if !(elasticity < 0.0 && elasticity.is_finite()) {
        return Err(Error::invalid(
            "elasticity",
            format!("must be negative, got {elasticity}"),
        ));
    }
    let b = -pi0 / (elasticity * d0);
    QuadraticUtility::new(pi0 + b * d0, b)
}

/// Utility of a settlement period.
///
/// `ZeroDemand` marks periods whose anchor consumption is zero: both
/// thresholds sit at zero, so any generation is exported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PeriodUtility {
    Quadratic(QuadraticUtility),
    ZeroDemand,
}

impl PeriodUtility {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, PeriodUtility::ZeroDemand)
    }

    pub fn quadratic(&self) -> Option<&QuadraticUtility> {
        match self {
            PeriodUtility::Quadratic(q) => Some(q),
            PeriodUtility::ZeroDemand => None,
        }
    }
}

impl Utility for PeriodUtility {
    fn value(&self, d: f64) -> f64 {
        match self {
            PeriodUtility::Quadratic(q) => q.value(d),
            PeriodUtility::ZeroDemand => 0.0,
        }
    }

    fn marginal(&self, d: f64) -> f64 {
        match self {
            PeriodUtility::Quadratic(q) => q.marginal(d),
            PeriodUtility::ZeroDemand => 0.0,
        }
    }

    fn curvature(&self, d: f64) -> f64 {
        match self {
            PeriodUtility::Quadratic(q) => q.curvature(d),
            PeriodUtility::ZeroDemand => f64::NEG_INFINITY,
        }
    }

    fn demand_at(&self, price: f64) -> f64 {
        match self {
            PeriodUtility::Quadratic(q) => q.demand_at(price),
            PeriodUtility::ZeroDemand => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn utility_values() {
        let u = QuadraticUtility::new(1.75, 0.7).unwrap();
        assert_eq!(u.utility(0.0).unwrap(), 0.0);
        assert!(close(u.utility(2.0).unwrap(), 2.1, 1e-12));
        assert!(close(u.d_max(), 2.5, 1e-12));
        assert!(close(u.utility(2.5).unwrap(), 1.75 * 1.75 / 1.4, 1e-12));
        assert!(close(u.utility(2.5).unwrap(), 2.1875, 1e-12));
        assert!(u.utility(-0.1).is_err());
    }

    #[test]
    fn inverse_demand_values() {
        let u = QuadraticUtility::new(1.75, 0.7).unwrap();
        assert!(close(u.inverse_demand(0.35), 2.0, 1e-12));
        assert!(close(u.inverse_demand(0.16), 2.2714285714, 1e-10));
        assert_eq!(u.inverse_demand(1.75), 0.0);
        assert_eq!(u.inverse_demand(2.5), 0.0);
        assert!(u.is_choked(1.75));
        assert!(!u.is_choked(0.35));
    }

    #[test]
    fn threshold_pairs() {
        let u = QuadraticUtility::new(1.75, 0.7).unwrap();
        let th = u.thresholds(PeriodPrice::new(0.35, 0.16));
        assert!(close(th.d_plus, 2.0, 1e-12));
        assert!(close(th.d_minus, 2.2714285714, 1e-10));

        let th = u.thresholds(PeriodPrice::new(0.35, 0.35 - 1e-6));
        assert!(close(th.d_minus - th.d_plus, 1e-6 / 0.7, 1e-12));

        let th = u.thresholds(PeriodPrice::new(1.75, 0.2));
        assert_eq!(th.d_plus, 0.0);
        assert!(th.d_minus > 0.0);
    }

    #[test]
    fn calibration_examples() {
        let u = calibrate(2.0, 0.35, -0.25).unwrap();
        assert!(close(u.a, 1.75, 1e-12) && close(u.b, 0.7, 1e-12));
        assert!(close(u.inverse_demand(0.35), 2.0, 1e-12));
        let u = calibrate(4.0, 0.35, -0.25).unwrap();
        assert!(close(u.a, 1.75, 1e-12) && close(u.b, 0.35, 1e-12));
        let u = calibrate(1.0, 1.0, -1.0).unwrap();
        assert!(close(u.a, 2.0, 1e-12) && close(u.b, 1.0, 1e-12));
        assert!(calibrate(1.0, 0.35, 0.0).is_err());
        assert!(calibrate(0.0, 0.35, -0.25).is_err());
        assert!(calibrate(1.0, 0.35, 0.5).is_err());
    }

    #[test]
    fn zero_demand_period() {
        let z = PeriodUtility::ZeroDemand;
        let th = z.thresholds(PeriodPrice::new(0.3, 0.1));
        assert_eq!((th.d_plus, th.d_minus), (0.0, 0.0));
        assert_eq!(z.demand_slope(0.3), 0.0);
        assert!(z.is_degenerate());
    }

    #[test]
    fn finite_difference_marginal() {
        let u = QuadraticUtility::new(1.75, 0.7).unwrap();
        let h = 1e-5;
        for i in 0..=100 {
            let d = u.d_max() * i as f64 / 100.0;
            let fd = (u.value(d + h) - u.value(d - h)) / (2.0 * h);
            assert!(close(fd, u.marginal(d), 1e-6), "d={d}");
        }
    }

    proptest! {
        #[test]
        fn anchor_is_reproduced(d0 in 0.01f64..500.0, pi0 in 0.01f64..2.0, e in -3.0f64..-0.01) {
            let u = calibrate(d0, pi0, e).unwrap();
            prop_assert!((u.inverse_demand(pi0) - d0).abs() <= 1e-12 * d0.max(1.0));
            prop_assert!((u.a - pi0 * (1.0 - 1.0 / e)).abs() <= 1e-12 * u.a);
        }

        #[test]
        fn demand_decreases_in_price(a in 0.1f64..3.0, b in 0.01f64..3.0, p in -1.0f64..3.0, dp in 0.0f64..1.0) {
            let u = QuadraticUtility::new(a, b).unwrap();
            prop_assert!(u.inverse_demand(p + dp) <= u.inverse_demand(p));
            let th = u.thresholds(PeriodPrice::new(p + dp, p));
            prop_assert!(th.d_plus <= th.d_minus);
        }
    }
}
