//! Capacity-factor distributions and the expectation engine.
//!
//! A clipped normal puts atoms at both ends of its support. Expectations are
//! computed as atom contributions plus adaptive Gauss-Legendre quadrature of
//! the continuous part, split at caller-supplied breakpoints so each segment
//! is smooth. [`mc_expect`] is a seeded Monte Carlo estimator used to check
//! the quadrature.

use std::sync::OnceLock;

use libm::erfc;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dispatch::{classify, Regime, Tie};
use crate::error::{Error, Result};
use crate::utility::Thresholds;

const GL_ORDER: usize = 32;
/// Absolute tolerance of one expectation.
pub const QUADRATURE_TOL: f64 = 1e-9;
const MAX_DEPTH: u32 = 30;

/// Distribution of a period's capacity factor on `[0, psi_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CapacityFactorDist {
    PointMass(f64),
    /// Normal(mu, sigma) clamped to `[0, psi_max]`; the clamped tails become
    /// atoms at 0 and `psi_max`.
    ClippedNormal {
        mu: f64,
        sigma: f64,
        psi_max: f64,
    },
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl CapacityFactorDist {
    pub fn point_mass(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid("psi", format!("point mass {value} outside [0, 1]")));
        }
        Ok(Self::PointMass(value))
    }

    pub fn clipped_normal(mu: f64, sigma: f64, psi_max: f64) -> Result<Self> {
        if !(psi_max > 0.0 && psi_max <= 1.0) {
            return Err(Error::invalid("psi_max", format!("must lie in (0, 1], got {psi_max}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        if !mu.is_finite() {
            return Err(Error::invalid("mu", "must be finite"));
        }
        Ok(Self::ClippedNormal { mu, sigma, psi_max })
    }

    /// Upper end of the support (the capacity-factor bound).
    pub fn psi_max(&self) -> f64 {
        match *self {
            Self::PointMass(v) => v,
            Self::ClippedNormal { psi_max, .. } => psi_max,
        }
    }

    /// False for periods that never generate.
    pub fn is_generating(&self) -> bool {
        self.psi_max() > 0.0
    }

    /// Atom locations and masses.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match *self {
            Self::PointMass(v) => vec![(v, 1.0)],
            Self::ClippedNormal { mu, sigma, psi_max } => vec![
                (0.0, std_normal_cdf(-mu / sigma)),
                (psi_max, std_normal_cdf((mu - psi_max) / sigma)),
            ],
        }
    }

    /// P(psi <= x) when `inclusive`, else P(psi < x).
    pub fn cdf(&self, x: f64, inclusive: bool) -> f64 {
        match *self {
            Self::PointMass(v) => {
                if x > v || (inclusive && x == v) {
                    1.0
                } else {
                    0.0
                }
            }
            Self::ClippedNormal { mu, sigma, psi_max } => {
                if x < 0.0 || (x == 0.0 && !inclusive) {
                    0.0
                } else if x > psi_max || (x == psi_max && inclusive) {
                    1.0
                } else {
                    // continuous part has no mass at x; the atom at 0 is
                    // included for every x > 0 or inclusive x == 0
                    std_normal_cdf((x - mu) / sigma)
                }
            }
        }
    }

    /// Probabilities of the import / net-zero / export regimes at capacity `g`.
    ///
    /// Atoms are classified with `tie`; the continuous part has no ties.
    pub fn regime_probabilities(&self, g: f64, th: Thresholds, tie: Tie) -> RegimeProbabilities {
        let mut p = RegimeProbabilities::default();
        if g <= 0.0 || !self.is_generating() {
            *p.get_mut(classify(0.0, th, tie)) = 1.0;
            return p;
        }
        for (x, mass) in self.atoms() {
            *p.get_mut(classify(x * g, th, tie)) += mass;
        }
        if let Self::ClippedNormal { mu, sigma, psi_max } = *self {
            let cdf = |x: f64| std_normal_cdf((x.clamp(0.0, psi_max) - mu) / sigma);
            let bottom = cdf(0.0);
            let top = cdf(psi_max);
            let lower = cdf(th.d_plus / g);
            let upper = cdf(th.d_minus / g).max(lower);
            p.import += lower - bottom;
            p.export += top - upper;
            p.net_zero += upper - lower;
        }
        p
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimeProbabilities {
    pub import: f64,
    pub net_zero: f64,
    pub export: f64,
}

impl RegimeProbabilities {
    pub fn get(&self, r: Regime) -> f64 {
        match r {
            Regime::Import => self.import,
            Regime::NetZero => self.net_zero,
            Regime::Export => self.export,
        }
    }

    fn get_mut(&mut self, r: Regime) -> &mut f64 {
        match r {
            Regime::Import => &mut self.import,
            Regime::NetZero => &mut self.net_zero,
            Regime::Export => &mut self.export,
        }
    }
}

/// `P(import), P(net zero), P(export)` for generation `psi * g`, boundary
/// ties counted as net zero.
pub fn regime_probabilities(dist: &CapacityFactorDist, g: f64, th: Thresholds) -> RegimeProbabilities {
    dist.regime_probabilities(g, th, Tie::Closed)
}

type Branch<'a> = Box<dyn Fn(f64, f64) -> f64 + 'a>;
type AtomFn<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

/// An integrand that is smooth between breakpoints.
///
/// `branch(psi, rep)` is evaluated strictly inside a segment; `rep` is a
/// point of the same segment (its midpoint under quadrature, `psi` itself
/// under Monte Carlo) so callers can pick the branch without worrying about
/// rounding near a breakpoint. `atom(psi)` gives the value at atoms.
pub struct PiecewiseIntegrand<'a> {
    breakpoints: Vec<f64>,
    branch: Branch<'a>,
    atom: AtomFn<'a>,
}

impl<'a> PiecewiseIntegrand<'a> {
    pub fn new(breakpoints: Vec<f64>, branch: impl Fn(f64, f64) -> f64 + 'a, atom: impl Fn(f64) -> f64 + 'a) -> Self {
        Self {
            breakpoints,
            branch: Box::new(branch),
            atom: Box::new(atom),
        }
    }

    /// Same function everywhere, no breakpoints.
    pub fn smooth(f: impl Fn(f64) -> f64 + Clone + 'a) -> Self {
        let g = f.clone();
        Self::new(Vec::new(), move |x, _| f(x), g)
    }

    pub fn with_breakpoints(mut self, extra: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(extra);
        self
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Value for a realized capacity factor (used by sampling).
    pub fn eval_sample(&self, psi: f64, at_atom: bool) -> f64 {
        if at_atom {
            (self.atom)(psi)
        } else {
            (self.branch)(psi, psi)
        }
    }
}

fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

fn gl_segment(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

fn adaptive(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (lo + hi);
    let left = gl_segment(f, lo, mid);
    let right = gl_segment(f, mid, hi);
    let sum = left + right;
    if depth == 0 || (sum - whole).abs() <= tol || !sum.is_finite() {
        return sum;
    }
    adaptive(f, lo, mid, left, 0.5 * tol, depth - 1) + adaptive(f, mid, hi, right, 0.5 * tol, depth - 1)
}

/// E[f(psi)] under `dist`.
pub fn expect(dist: &CapacityFactorDist, f: &PiecewiseIntegrand<'_>) -> Result<f64> {
    match *dist {
        CapacityFactorDist::PointMass(v) => {
            let y = (f.atom)(v);
            if !y.is_finite() {
                return Err(Error::NonFiniteIntegrand { lo: v, hi: v });
            }
            Ok(y)
        }
        CapacityFactorDist::ClippedNormal { mu, sigma, psi_max } => {
            let mut total = 0.0;
            for (x, mass) in dist.atoms() {
                if mass > 0.0 {
                    let y = (f.atom)(x);
                    if !y.is_finite() {
                        return Err(Error::NonFiniteIntegrand { lo: x, hi: x });
                    }
                    total += mass * y;
                }
            }

            // breakpoints plus points that resolve the bell at any sigma
            let mut cuts: Vec<f64> = vec![0.0, psi_max];
            cuts.extend(f.breakpoints.iter().copied().filter(|b| b.is_finite()));
            cuts.extend([-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0].map(|k| mu + k * sigma));
            cuts.retain(|&c| (0.0..=psi_max).contains(&c));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * psi_max);

            let nseg = (cuts.len() - 1) as f64;
            for w in cuts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                if hi <= lo {
                    continue;
                }
                let rep = 0.5 * (lo + hi);
                let weighted = |x: f64| (f.branch)(x, rep) * std_normal_pdf((x - mu) / sigma) / sigma;
                let whole = gl_segment(&weighted, lo, hi);
                let part = adaptive(&weighted, lo, hi, whole, QUADRATURE_TOL / nseg, MAX_DEPTH);
                if !part.is_finite() {
                    return Err(Error::NonFiniteIntegrand { lo, hi });
                }
                total += part;
            }
            Ok(total)
        }
    }
}

/// Counter-based generator for task `stream` of a run seeded with `seed`.
pub fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seeded Monte Carlo estimate of E[f(psi)]: `(mean, standard error)`.
pub fn mc_expect(dist: &CapacityFactorDist, f: &PiecewiseIntegrand<'_>, n: usize, seed: u64) -> (f64, f64) {
    mc_expect_many(dist, std::slice::from_ref(f), n, seed)[0]
}

/// Monte Carlo estimates of several integrands from one sample stream.
pub fn mc_expect_many(
    dist: &CapacityFactorDist,
    fs: &[PiecewiseIntegrand<'_>],
    n: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    assert!(n >= 2, "Monte Carlo needs at least two samples");
    match *dist {
        CapacityFactorDist::PointMass(v) => fs.iter().map(|f| (f.eval_sample(v, true), 0.0)).collect(),
        CapacityFactorDist::ClippedNormal { mu, sigma, psi_max } => {
            let mut rng = task_rng(seed, 0);
            let mut mean = vec![0.0; fs.len()];
            let mut m2 = vec![0.0; fs.len()];
            for i in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                let raw = mu + sigma * z;
                let (psi, at_atom) = if raw <= 0.0 {
                    (0.0, true)
                } else if raw >= psi_max {
                    (psi_max, true)
                } else {
                    (raw, false)
                };
                let k = (i + 1) as f64;
                for (j, f) in fs.iter().enumerate() {
                    let y = f.eval_sample(psi, at_atom);
                    let delta = y - mean[j];
                    mean[j] += delta / k;
                    m2[j] += delta * (y - mean[j]);
                }
            }
            mean.into_iter()
                .zip(m2)
                .map(|(m, s)| (m, (s / (n as f64 - 1.0) / n as f64).sqrt()))
                .collect()
        }
    }
}
