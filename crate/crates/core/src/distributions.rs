//! Probability laws on the real line.
//!
//! Every supported law is a finite combination of atoms and normal
//! components, so CDFs, lower quantiles and lower partial moments have
//! closed forms (bisection for mixture quantiles). General expectations go
//! through [`Distribution::expect`]: atoms are summed exactly and normal parts
//! are integrated adaptively with caller-declared jump points.

use std::cell::RefCell;
use std::fmt;

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breaks, QuadOptions};

/// Default relative tolerance for [`Distribution::expect`].
pub const DEFAULT_TOL: f64 = 1e-9;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934;

/// Standard normal density.
pub fn std_normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Standard normal CDF, via the complementary error function (accurate to
/// a few ulps in both tails).
pub fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF, polished with Newton steps on the CDF.
pub fn std_normal_quantile(q: f64) -> f64 {
    let mut u = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
    for _ in 0..3 {
        let pdf = std_normal_pdf(u);
        if pdf <= 0.0 || !u.is_finite() {
            break;
        }
        let step = (std_normal_cdf(u) - q) / pdf;
        u -= step;
        if step.abs() <= 1e-16 * u.abs().max(1.0) {
            break;
        }
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `F(y) = P(Y <= y)`
    Right,
    /// `F(y-) = P(Y < y)`
    Left,
}

/// Finite discrete law: sorted distinct atoms with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Discrete {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("discrete distribution", "no atoms"));
        }
        let mut pts: Vec<(f64, f64)> = points.to_vec();
        for &(y, w) in &pts {
            if !y.is_finite() {
                return Err(Error::invalid("discrete distribution", format!("atom {y} is not finite")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid("discrete distribution", format!("weight {w} is not positive")));
            }
        }
        let total: f64 = pts.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("discrete distribution", format!("weights sum to {total}, not 1")));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pts.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pts.len());
        for (y, w) in pts {
            if atoms.last() == Some(&y) {
                *weights.last_mut().expect("non-empty") += w;
            } else {
                atoms.push(y);
                weights.push(w);
            }
        }
        weights.iter_mut().for_each(|w| *w /= total);
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        *cumulative.last_mut().expect("non-empty") = 1.0;
        Ok(Self {
            atoms,
            weights,
            cumulative,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn cdf(&self, y: f64, side: Side) -> f64 {
        let n = match side {
            Side::Right => self.atoms.partition_point(|&a| a <= y),
            Side::Left => self.atoms.partition_point(|&a| a < y),
        };
        if n == 0 {
            0.0
        } else {
            self.cumulative[n - 1]
        }
    }
}

/// Finite mixture with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    components: Vec<(f64, Distribution)>,
}

impl Mixture {
    pub fn new(components: Vec<(f64, Distribution)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture", "no components"));
        }
        if components.iter().any(|(w, _)| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("mixture", "weights must be non-negative"));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mixture", format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, Distribution)] {
        &self.components
    }

    fn active(&self) -> impl Iterator<Item = &(f64, Distribution)> {
        self.components.iter().filter(|(w, _)| *w > 0.0)
    }
}

/// A probability law on the reals.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Point(f64),
    Discrete(Discrete),
    Normal { mu: f64, sigma: f64 },
    Mixture(Mixture),
}

impl Distribution {
    pub fn point(c: f64) -> Self {
        Distribution::Point(c)
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("normal distribution", format!("mu={mu}, sigma={sigma}")));
        }
        Ok(Distribution::Normal { mu, sigma })
    }

    pub fn standard_normal() -> Self {
        Distribution::Normal { mu: 0.0, sigma: 1.0 }
    }

    pub fn discrete(points: &[(f64, f64)]) -> Result<Self> {
        Discrete::new(points).map(Distribution::Discrete)
    }

    pub fn mixture(components: Vec<(f64, Distribution)>) -> Result<Self> {
        Mixture::new(components).map(Distribution::Mixture)
    }

    /// `true` when the law has no atoms.
    pub fn is_continuous(&self) -> bool {
        match self {
            Distribution::Point(_) | Distribution::Discrete(_) => false,
            Distribution::Normal { .. } => true,
            Distribution::Mixture(m) => m.active().all(|(_, d)| d.is_continuous()),
        }
    }

    fn has_continuous_part(&self) -> bool {
        match self {
            Distribution::Point(_) | Distribution::Discrete(_) => false,
            Distribution::Normal { .. } => true,
            Distribution::Mixture(m) => m.active().any(|(_, d)| d.has_continuous_part()),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.cdf_eval(y, Side::Right)
    }

    pub fn cdf_left(&self, y: f64) -> f64 {
        self.cdf_eval(y, Side::Left)
    }

    pub fn cdf_eval(&self, y: f64, side: Side) -> f64 {
        match self {
            Distribution::Point(c) => {
                let hit = match side {
                    Side::Right => *c <= y,
                    Side::Left => *c < y,
                };
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::Discrete(d) => d.cdf(y, side),
            Distribution::Normal { mu, sigma } => std_normal_cdf((y - mu) / sigma),
            Distribution::Mixture(m) => m
                .active()
                .map(|(w, d)| w * d.cdf_eval(y, side))
                .sum::<f64>()
                .min(1.0),
        }
    }

    /// Lower quantile `inf{x : F(x) >= q}` for `0 < q < 1`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_level(q)?;
        Ok(self.threshold(q, false))
    }

    /// Upper quantile `inf{x : F(x) > q}`.
    pub fn upper_quantile(&self, q: f64) -> Result<f64> {
        check_level(q)?;
        Ok(self.threshold(q, true))
    }

    /// Whether the `q`-quantile is unique (lower and upper quantiles agree).
    pub fn has_unique_quantile(&self, q: f64) -> Result<bool> {
        if self.has_continuous_part() {
            // a normal component gives the mixture a positive density everywhere
            check_level(q)?;
            return Ok(true);
        }
        Ok(self.quantile(q)? == self.upper_quantile(q)?)
    }

    fn threshold(&self, q: f64, strict: bool) -> f64 {
        match self {
            Distribution::Point(c) => *c,
            Distribution::Discrete(d) => {
                let i = if strict {
                    d.cumulative.partition_point(|&c| c <= q)
                } else {
                    d.cumulative.partition_point(|&c| c < q)
                };
                d.atoms[i.min(d.atoms.len() - 1)]
            }
            Distribution::Normal { mu, sigma } => mu + sigma * std_normal_quantile(q),
            Distribution::Mixture(m) => {
                let reached = |x: f64| {
                    let f = self.cdf(x);
                    if strict {
                        f > q
                    } else {
                        f >= q
                    }
                };
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (_, d) in m.active() {
                    let t = d.threshold(q, strict);
                    lo = lo.min(t);
                    hi = hi.max(t);
                }
                if reached(lo) {
                    return lo;
                }
                let mut step = hi.abs().max(1.0) * 1e-12;
                while !reached(hi) {
                    hi += step;
                    step *= 2.0;
                }
                bisect_threshold(reached, lo, hi)
            }
        }
    }

    /// Lower partial moment `E[(z - Y) 1{Y <= z}] = integral of F over (-inf, z]`.
    pub fn lpm(&self, z: f64) -> f64 {
        match self {
            Distribution::Point(c) => (z - c).max(0.0),
            Distribution::Discrete(d) => d
                .atoms
                .iter()
                .zip(&d.weights)
                .take_while(|(&y, _)| y <= z)
                .map(|(y, w)| w * (z - y))
                .sum(),
            Distribution::Normal { mu, sigma } => {
                let a = (z - mu) / sigma;
                sigma * std_normal_pdf(a) + (z - mu) * std_normal_cdf(a)
            }
            Distribution::Mixture(m) => m.active().map(|(w, d)| w * d.lpm(z)).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Point(c) => *c,
            Distribution::Discrete(d) => d.atoms.iter().zip(&d.weights).map(|(y, w)| y * w).sum(),
            Distribution::Normal { mu, .. } => *mu,
            Distribution::Mixture(m) => m.active().map(|(w, d)| w * d.mean()).sum(),
        }
    }

    /// `E[f(Y)]`. Atoms are summed exactly (so indicator conventions such as
    /// `1{y <= x}` are honoured at atoms); continuous parts are integrated to
    /// relative tolerance `tol`, split at every point in `jumps`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, jumps: &[f64], tol: f64) -> Result<f64> {
        self.expect_dyn(&f, jumps, tol)
    }

    fn expect_dyn(&self, f: &dyn Fn(f64) -> f64, jumps: &[f64], tol: f64) -> Result<f64> {
        match self {
            Distribution::Point(c) => finite(f(*c)),
            Distribution::Discrete(d) => finite(d.atoms.iter().zip(&d.weights).map(|(&y, w)| w * f(y)).sum()),
            Distribution::Normal { mu, sigma } => {
                let (mu, sigma) = (*mu, *sigma);
                // Fixed cuts keep the bulk of the density on the grid when
                // every jump lies far out in a tail.
                let breaks: Vec<f64> = jumps
                    .iter()
                    .map(|j| (j - mu) / sigma)
                    .chain([-8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0])
                    .collect();
                let opts = QuadOptions {
                    rel_tol: tol,
                    abs_tol: 1e-15,
                    ..QuadOptions::default()
                };
                let g = |u: f64| {
                    let w = std_normal_pdf(u);
                    if w == 0.0 {
                        0.0
                    } else {
                        w * f(mu + sigma * u)
                    }
                };
                integrate_with_breaks(g, f64::NEG_INFINITY, f64::INFINITY, &breaks, opts).map(|r| r.value)
            }
            Distribution::Mixture(m) => {
                let mut acc = 0.0;
                for (w, d) in m.active() {
                    acc += w * d.expect_dyn(f, jumps, tol)?;
                }
                Ok(acc)
            }
        }
    }

    /// Like [`expect`](Self::expect) for integrands that can fail; the first
    /// error raised by `f` is returned.
    pub fn try_expect<F: Fn(f64) -> Result<f64>>(&self, f: F, jumps: &[f64], tol: f64) -> Result<f64> {
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let value = self.expect(
            |y| match f(y) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            jumps,
            tol,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        value
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Integration {
            estimate: v,
            error_bound: f64::INFINITY,
        })
    }
}

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("probability level", format!("{q} is not in (0, 1)")))
    }
}

/// Smallest float in `(lo, hi]` where the monotone predicate turns true.
fn bisect_threshold(pred: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2200 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Point(c) => write!(f, "point({c})"),
            Distribution::Normal { mu, sigma } => write!(f, "normal({mu},{sigma})"),
            Distribution::Discrete(d) => {
                write!(f, "discrete(")?;
                for (i, (y, w)) in d.atoms.iter().zip(&d.weights).enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{y}:{w}")?;
                }
                write!(f, ")")
            }
            Distribution::Mixture(m) => {
                write!(f, "mixture(")?;
                for (i, (w, d)) in m.components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{w}*{d}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn n(mu: f64, sigma: f64) -> Distribution {
        Distribution::normal(mu, sigma).unwrap()
    }

    #[test]
    fn cdf_sides() {
        let p = Distribution::point(0.0);
        assert_eq!(p.cdf(0.0), 1.0);
        assert_eq!(p.cdf_left(0.0), 0.0);
        assert_eq!(n(0.2, 0.1).cdf(0.2), 0.5);
        let d = Distribution::discrete(&[(1.0, 0.5), (3.0, 0.5)]).unwrap();
        assert_eq!(d.cdf(2.0), 0.5);
        assert_eq!(d.cdf(3.0), 1.0);
        assert_eq!(d.cdf_left(3.0), 0.5);
    }

    #[test]
    fn quantiles() {
        assert_eq!(Distribution::point(0.0).quantile(0.5).unwrap(), 0.0);
        let z = Distribution::standard_normal().quantile(0.05).unwrap();
        assert!((z + 1.644_853_626_951_472_2).abs() < 1e-13);
        let d = Distribution::discrete(&[(1.0, 0.25), (2.0, 0.25), (3.0, 0.5)]).unwrap();
        assert_eq!(d.quantile(0.5).unwrap(), 2.0);
        assert_eq!(d.upper_quantile(0.5).unwrap(), 3.0);
        assert!(!d.has_unique_quantile(0.5).unwrap());
        assert!(d.has_unique_quantile(0.4).unwrap());
        assert!(Distribution::point(0.0).quantile(1.0).is_err());
    }

    #[test]
    fn mixture_quantile_lands_on_atom() {
        let m = Distribution::mixture(vec![(0.5, Distribution::point(1.0)), (0.5, n(5.0, 1.0))]).unwrap();
        // F jumps from ~0 to ~0.5 at 1
        assert_eq!(m.quantile(0.3).unwrap(), 1.0);
        let q = m.quantile(0.75).unwrap();
        assert!((q - 5.0).abs() < 1e-9, "{q}");
    }

    #[test]
    fn lpm_examples() {
        let p = Distribution::point(0.0);
        assert_eq!(p.lpm(2.0), 2.0);
        assert_eq!(p.lpm(-1.0), 0.0);
        // frozen from the quadrature oracle below: int_{-inf}^0 (0 - y) phi(y) dy = 1/sqrt(2 pi)
        assert!((Distribution::standard_normal().lpm(0.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn lpm_oracle_by_quadrature() {
        let opts = QuadOptions::with_rel_tol(1e-12);
        let oracle = integrate(|y: f64| -y * std_normal_pdf(y), f64::NEG_INFINITY, 0.0, opts).unwrap();
        assert!((oracle.value - 0.398_942_28).abs() < 1e-8);
    }

    #[test]
    fn expect_examples() {
        let v = n(0.2, 0.1).expect(|y| y, &[], 1e-10).unwrap();
        assert!((v - 0.2).abs() < 1e-9);
        let v = Distribution::point(0.0).expect(|y: f64| (-y).exp(), &[], 1e-10).unwrap();
        assert_eq!(v, 1.0);
        let x = -1.6449;
        let v = Distribution::standard_normal()
            .expect(|y| if y <= x { 1.0 } else { 0.0 }, &[x], 1e-10)
            .unwrap();
        assert!((v - std_normal_cdf(x)).abs() < 1e-12);
        assert!((v - 0.05).abs() < 1e-5);
    }

    #[test]
    fn expect_with_jump_far_in_the_tail() {
        for (sigma, a) in [(0.1, 4.647306655654252), (0.01, 0.5)] {
            let d = n(0.0, sigma);
            let v = d.expect(|y| (a - y).max(0.0), &[a], 1e-12).unwrap();
            assert!((v - a).abs() < 1e-12, "sigma {sigma}: {v}");
        }
    }

    #[test]
    fn try_expect_propagates_first_error() {
        let err = n(0.0, 1.0)
            .try_expect(
                |y| {
                    if y > 0.0 {
                        Err(Error::OutsideDomain {
                            function: "test".into(),
                            x: y,
                        })
                    } else {
                        Ok(1.0)
                    }
                },
                &[],
                1e-9,
            )
            .unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { .. }));
    }

    #[test]
    fn constructor_validation() {
        assert!(Distribution::normal(0.0, 0.0).is_err());
        assert!(Distribution::discrete(&[(0.0, 0.5)]).is_err());
        assert!(Distribution::discrete(&[(0.0, -0.5), (1.0, 1.5)]).is_err());
        assert!(Distribution::mixture(vec![(0.3, Distribution::point(0.0))]).is_err());
        let d = Distribution::discrete(&[(2.0, 0.25), (1.0, 0.5), (2.0, 0.25)]).unwrap();
        match d {
            Distribution::Discrete(d) => {
                assert_eq!(d.atoms(), &[1.0, 2.0]);
                assert_eq!(d.weights(), &[0.5, 0.5]);
            }
            _ => unreachable!(),
        }
    }
}
