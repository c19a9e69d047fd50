//! The quantile / Expected-Shortfall score family
//!
//! ```text
//! S(x, y) = sum_{r<k} [ (1{y <= x_r} - q_r) G_r(x_r) - 1{y <= x_r} G_r(y) ]
//!         + G_k(x_k) [ x_k + sum_m (p_m/q_m) ((x_m - y) 1{y <= x_m} - q_m x_m) ]
//!         - Gk(x_k) + a(y)
//! ```
//!
//! with `G_k = Gk'` for a convex `Gk`. Score functions are drawn from a small
//! serialisable catalogue (plus user-supplied closures for library callers).

mod bounds;
mod constructions;
mod decomposition;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::config::{parse_call, parse_f64};
use crate::distributions::{std_normal_cdf, Distribution};
use crate::error::{check_dim, Error, Result};
use crate::functionals::FunctionalSpec;

pub use bounds::{b_bound, c_bound};
pub use constructions::{diagonal_score_diff, phi_score_diff, AffineShift, FnPotential, Potential, QuadraticPotential};
pub use decomposition::{quantile_term_monotonicity, score_diff_decomposition, Closure, Interval, Monotonicity, ScoreDiffDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    NotConvex,
    Convex,
    StrictlyConvex,
}

impl Convexity {
    pub fn is_convex(self) -> bool {
        self != Convexity::NotConvex
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied scalar function: value, derivative, optional second
/// derivative, a convexity flag and an open domain `(lo, hi)`.
#[derive(Clone)]
pub struct CustomFn {
    name: String,
    value: RealFn,
    derivative: RealFn,
    second: Option<RealFn>,
    convexity: Convexity,
    domain: (f64, f64),
}

impl CustomFn {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        convexity: Convexity,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            second: None,
            convexity,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn with_second_derivative(mut self, second: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.second = Some(Arc::new(second));
        self
    }

    /// Restricts the function to the open interval `(lo, hi)`.
    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = (lo, hi);
        self
    }
}

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFn")
            .field("name", &self.name)
            .field("convexity", &self.convexity)
            .field("domain", &self.domain)
            .finish()
    }
}

impl PartialEq for CustomFn {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.convexity == other.convexity && self.domain == other.domain
    }
}

/// Catalogue of scalar functions used for `G_r`, `Gk` and the offset `a`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreFn {
    Zero,
    /// `intercept + slope * x`
    Linear { intercept: f64, slope: f64 },
    /// `scale * exp(rate * x)`
    Exp { scale: f64, rate: f64 },
    /// `-scale * ln(-x)` for `x < 0`
    NegLogNeg { scale: f64 },
    /// `x^exponent` for `x >= 0` (`x > 0` when the exponent is negative)
    Power { exponent: f64 },
    Custom(CustomFn),
}

impl ScoreFn {
    pub fn exp() -> Self {
        ScoreFn::Exp { scale: 1.0, rate: 1.0 }
    }

    pub fn neg_log_neg() -> Self {
        ScoreFn::NegLogNeg { scale: 1.0 }
    }

    pub fn identity() -> Self {
        ScoreFn::Linear {
            intercept: 0.0,
            slope: 1.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        ScoreFn::Linear {
            intercept: c,
            slope: 0.0,
        }
    }

    pub fn in_domain(&self, x: f64) -> bool {
        if x.is_nan() {
            return false;
        }
        match self {
            ScoreFn::NegLogNeg { .. } => x < 0.0,
            ScoreFn::Power { exponent } => {
                if *exponent < 0.0 {
                    x > 0.0
                } else {
                    x >= 0.0
                }
            }
            ScoreFn::Custom(c) => x > c.domain.0 && x < c.domain.1,
            _ => true,
        }
    }

    fn guard(&self, x: f64) -> Result<()> {
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                function: self.to_string(),
                x,
            })
        }
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        self.guard(x)?;
        Ok(match self {
            ScoreFn::Zero => 0.0,
            ScoreFn::Linear { intercept, slope } => intercept + slope * x,
            ScoreFn::Exp { scale, rate } => scale * (rate * x).exp(),
            ScoreFn::NegLogNeg { scale } => -scale * (-x).ln(),
            ScoreFn::Power { exponent } => x.powf(*exponent),
            ScoreFn::Custom(c) => (c.value)(x),
        })
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.guard(x)?;
        Ok(match self {
            ScoreFn::Zero => 0.0,
            ScoreFn::Linear { slope, .. } => *slope,
            ScoreFn::Exp { scale, rate } => scale * rate * (rate * x).exp(),
            ScoreFn::NegLogNeg { scale } => -scale / x,
            ScoreFn::Power { exponent } => {
                if *exponent == 0.0 {
                    0.0
                } else {
                    exponent * x.powf(exponent - 1.0)
                }
            }
            ScoreFn::Custom(c) => (c.derivative)(x),
        })
    }

    pub fn second_derivative(&self, x: f64) -> Result<f64> {
        self.guard(x)?;
        match self {
            ScoreFn::Zero | ScoreFn::Linear { .. } => Ok(0.0),
            ScoreFn::Exp { scale, rate } => Ok(scale * rate * rate * (rate * x).exp()),
            ScoreFn::NegLogNeg { scale } => Ok(scale / (x * x)),
            ScoreFn::Power { exponent } => {
                let b = *exponent;
                if b == 0.0 || b == 1.0 {
                    Ok(0.0)
                } else {
                    Ok(b * (b - 1.0) * x.powf(b - 2.0))
                }
            }
            ScoreFn::Custom(c) => match &c.second {
                Some(s) => Ok(s(x)),
                None => Err(Error::invalid(
                    "score function",
                    format!("{} has no second derivative", c.name),
                )),
            },
        }
    }

    pub fn convexity(&self) -> Convexity {
        match self {
            ScoreFn::Zero | ScoreFn::Linear { .. } => Convexity::Convex,
            ScoreFn::Exp { scale, rate } => {
                if *scale > 0.0 && *rate != 0.0 {
                    Convexity::StrictlyConvex
                } else if *scale >= 0.0 || *rate == 0.0 {
                    Convexity::Convex
                } else {
                    Convexity::NotConvex
                }
            }
            ScoreFn::NegLogNeg { scale } => {
                if *scale > 0.0 {
                    Convexity::StrictlyConvex
                } else if *scale == 0.0 {
                    Convexity::Convex
                } else {
                    Convexity::NotConvex
                }
            }
            ScoreFn::Power { exponent } => {
                let b = *exponent;
                if !(0.0..=1.0).contains(&b) {
                    Convexity::StrictlyConvex
                } else if b == 1.0 || b == 0.0 {
                    Convexity::Convex
                } else {
                    Convexity::NotConvex
                }
            }
            ScoreFn::Custom(c) => c.convexity,
        }
    }

    /// `E[1{Y <= x} f(Y)]`, closed form for the zero, linear and exponential
    /// entries; quadrature (with a declared jump at `x`) otherwise.
    pub fn partial_expectation(&self, d: &Distribution, x: f64, tol: f64) -> Result<f64> {
        match self {
            ScoreFn::Zero => Ok(0.0),
            ScoreFn::Linear { intercept, slope } => {
                let fx = d.cdf(x);
                Ok(intercept * fx + slope * (x * fx - d.lpm(x)))
            }
            ScoreFn::Exp { scale, rate } => Ok(scale * exp_partial(d, *rate, x)),
            _ => d.try_expect(|y| if y <= x { self.value(y) } else { Ok(0.0) }, &[x], tol),
        }
    }

    /// `E[f(Y)]`.
    pub fn full_expectation(&self, d: &Distribution, tol: f64) -> Result<f64> {
        match self {
            ScoreFn::Zero => Ok(0.0),
            ScoreFn::Linear { intercept, slope } => Ok(intercept + slope * d.mean()),
            ScoreFn::Exp { scale, rate } => Ok(scale * exp_partial(d, *rate, f64::INFINITY)),
            _ => d.try_expect(|y| self.value(y), &[], tol),
        }
    }
}

/// `E[1{Y <= x} exp(rate Y)]`.
fn exp_partial(d: &Distribution, rate: f64, x: f64) -> f64 {
    match d {
        Distribution::Point(c) => {
            if *c <= x {
                (rate * c).exp()
            } else {
                0.0
            }
        }
        Distribution::Discrete(dd) => dd
            .atoms()
            .iter()
            .zip(dd.weights())
            .take_while(|(&y, _)| y <= x)
            .map(|(y, w)| w * (rate * y).exp())
            .sum(),
        Distribution::Normal { mu, sigma } => {
            let mgf = (rate * mu + 0.5 * rate * rate * sigma * sigma).exp();
            if x == f64::INFINITY {
                mgf
            } else {
                mgf * std_normal_cdf((x - mu - rate * sigma * sigma) / sigma)
            }
        }
        Distribution::Mixture(m) => m
            .components()
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, c)| w * exp_partial(c, rate, x))
            .sum(),
    }
}

impl fmt::Display for ScoreFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreFn::Zero => write!(f, "zero"),
            ScoreFn::Linear { intercept, slope } => write!(f, "linear({intercept},{slope})"),
            ScoreFn::Exp { scale, rate } => {
                if *scale == 1.0 && *rate == 1.0 {
                    write!(f, "exp")
                } else {
                    write!(f, "exp({scale},{rate})")
                }
            }
            ScoreFn::NegLogNeg { scale } => {
                if *scale == 1.0 {
                    write!(f, "neg_log_neg")
                } else {
                    write!(f, "neg_log_neg({scale})")
                }
            }
            ScoreFn::Power { exponent } => write!(f, "power({exponent})"),
            ScoreFn::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for ScoreFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s)?;
        let nums: Vec<f64> = args.iter().map(|a| parse_f64(a)).collect::<Result<_>>()?;
        let arity = |n: usize| -> Result<()> {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::Parse(format!("`{name}` takes {n} argument(s), got {}", nums.len())))
            }
        };
        match name.as_str() {
            "zero" => {
                arity(0)?;
                Ok(ScoreFn::Zero)
            }
            "linear" => {
                arity(2)?;
                Ok(ScoreFn::Linear {
                    intercept: nums[0],
                    slope: nums[1],
                })
            }
            "exp" if nums.is_empty() => Ok(ScoreFn::exp()),
            "exp" => {
                arity(2)?;
                Ok(ScoreFn::Exp {
                    scale: nums[0],
                    rate: nums[1],
                })
            }
            "neg_log_neg" if nums.is_empty() => Ok(ScoreFn::neg_log_neg()),
            "neg_log_neg" => {
                arity(1)?;
                Ok(ScoreFn::NegLogNeg { scale: nums[0] })
            }
            "power" => {
                arity(1)?;
                Ok(ScoreFn::Power { exponent: nums[0] })
            }
            other => Err(Error::Parse(format!("unknown score function `{other}`"))),
        }
    }
}

/// A member of the score family: functional, `G_1..G_{k-1}`, the convex
/// `Gk` (whose derivative is `G_k`) and the offset `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSpec {
    functional: FunctionalSpec,
    quantile_terms: Vec<ScoreFn>,
    convex_term: ScoreFn,
    offset: ScoreFn,
}

impl ScoreSpec {
    pub fn new(functional: FunctionalSpec, quantile_terms: Vec<ScoreFn>, convex_term: ScoreFn, offset: ScoreFn) -> Result<Self> {
        check_dim(functional.k() - 1, quantile_terms.len())?;
        if !convex_term.convexity().is_convex() {
            return Err(Error::invalid("score", format!("{convex_term} is not convex")));
        }
        Ok(Self {
            functional,
            quantile_terms,
            convex_term,
            offset,
        })
    }

    /// The inconsistent cone example: `Gk = exp`, `G_1(s) = exp(-s) / alpha`,
    /// `a = 0`, for `T = (VaR_alpha, ES_alpha)`.
    pub fn counterexample_cone(alpha: f64) -> Result<Self> {
        Self::new(
            FunctionalSpec::var_es(alpha)?,
            vec![ScoreFn::Exp {
                scale: 1.0 / alpha,
                rate: -1.0,
            }],
            ScoreFn::exp(),
            ScoreFn::Zero,
        )
    }

    /// `G_1 = 0`, `Gk(x) = -ln(-x)` on `x < 0` (the "FZ0" score).
    pub fn fz0(alpha: f64) -> Result<Self> {
        Self::new(FunctionalSpec::var_es(alpha)?, vec![ScoreFn::Zero], ScoreFn::neg_log_neg(), ScoreFn::Zero)
    }

    pub fn functional(&self) -> &FunctionalSpec {
        &self.functional
    }

    pub fn k(&self) -> usize {
        self.functional.k()
    }

    pub fn quantile_terms(&self) -> &[ScoreFn] {
        &self.quantile_terms
    }

    pub fn convex_term(&self) -> &ScoreFn {
        &self.convex_term
    }

    pub fn offset(&self) -> &ScoreFn {
        &self.offset
    }

    /// `G_k(x) = Gk'(x)`.
    pub fn gk(&self, x: f64) -> Result<f64> {
        self.convex_term.derivative(x)
    }

    /// `G_k'(x) = Gk''(x)`.
    pub fn gk_prime(&self, x: f64) -> Result<f64> {
        self.convex_term.second_derivative(x)
    }

    /// Whether every point of `x` lies in the domain of the relevant functions.
    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.k()
            && self
                .quantile_terms
                .iter()
                .zip(x)
                .all(|(g, &v)| g.in_domain(v))
            && self.convex_term.in_domain(x[self.k() - 1])
    }

    /// Pointwise score `S(x, y)`.
    pub fn eval(&self, x: &[f64], y: f64) -> Result<f64> {
        let k = self.k();
        check_dim(k, x.len())?;
        let xk = x[k - 1];
        let mut score = 0.0;
        let mut bracket = xk;
        for (r, g) in self.quantile_terms.iter().enumerate() {
            let q = self.functional.levels()[r];
            let hit = y <= x[r];
            let ind = if hit { 1.0 } else { 0.0 };
            score += (ind - q) * g.value(x[r])?;
            if hit {
                score -= g.value(y)?;
            }
            let excess = if hit { x[r] - y } else { 0.0 };
            bracket += self.functional.ratio(r) * (excess - q * x[r]);
        }
        score += self.gk(xk)? * bracket - self.convex_term.value(xk)?;
        score += self.offset.value(y)?;
        Ok(score)
    }

    /// Expected score `S(x, F)`.
    pub fn expected(&self, x: &[f64], d: &Distribution, tol: f64) -> Result<f64> {
        let k = self.k();
        check_dim(k, x.len())?;
        let xk = x[k - 1];
        let mut score = 0.0;
        for (r, g) in self.quantile_terms.iter().enumerate() {
            let q = self.functional.levels()[r];
            score += (d.cdf(x[r]) - q) * g.value(x[r])?;
            score -= g.partial_expectation(d, x[r], tol)?;
        }
        let c = c_bound(&self.functional, x, d)?;
        score += self.gk(xk)? * (xk + c) - self.convex_term.value(xk)?;
        score += self.offset.full_expectation(d, tol)?;
        Ok(score)
    }
}

/// Free-function form of [`ScoreSpec::eval`].
pub fn eval_score(spec: &ScoreSpec, x: &[f64], y: f64) -> Result<f64> {
    spec.eval(x, y)
}

/// Free-function form of [`ScoreSpec::expected`].
pub fn expected_score(spec: &ScoreSpec, x: &[f64], d: &Distribution, tol: f64) -> Result<f64> {
    spec.expected(x, d, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The k = 2 cone score written out term by term.
    fn printed_counterexample(alpha: f64, x1: f64, x2: f64, y: f64) -> f64 {
        let ind = if y <= x1 { 1.0 } else { 0.0 };
        (ind - alpha) * (-x1).exp() / alpha - ind * (-y).exp() / alpha
            + x2.exp() * (x2 + (ind - alpha) * x1 / alpha - ind * y / alpha)
            - x2.exp()
    }

    #[test]
    fn cone_score_point_values() {
        let s = ScoreSpec::counterexample_cone(0.05).unwrap();
        assert_eq!(s.eval(&[0.0, 0.0], 0.0).unwrap(), -2.0);
        let v = s.eval(&[2.0, -1.8], 0.0).unwrap();
        assert!((v + 11.61).abs() < 5e-3, "{v}");
        assert_eq!(s.eval(&[0.0, 0.0], 1.0).unwrap(), -2.0);
    }

    #[test]
    fn general_form_matches_printed_formula() {
        let s = ScoreSpec::counterexample_cone(0.05).unwrap();
        for &(x1, x2, y) in &[
            (0.0, 0.0, 0.0),
            (2.0, -1.8, 0.0),
            (1.3, 0.4, -0.7),
            (0.5, -0.5, 2.0),
            (3.0, 2.9, 3.0),
        ] {
            let a = s.eval(&[x1, x2], y).unwrap();
            let b = printed_counterexample(0.05, x1, x2, y);
            assert!((a - b).abs() <= 1e-12, "({x1},{x2},{y}): {a} vs {b}");
        }
    }

    #[test]
    fn expected_under_point_mass_is_pointwise() {
        let s = ScoreSpec::counterexample_cone(0.05).unwrap();
        for c in [-1.0, 0.0, 0.7] {
            let d = Distribution::point(c);
            for x in [[0.0, 0.0], [2.0, -1.8], [0.7, 0.1]] {
                let a = s.expected(&x, &d, 1e-10).unwrap();
                let b = s.eval(&x, c).unwrap();
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn cone_score_expected_values() {
        let s = ScoreSpec::counterexample_cone(0.05).unwrap();
        let d = Distribution::normal(0.2, 0.1).unwrap();
        let t = s.functional().evaluate(&d).unwrap();
        let at_t = s.expected(&t, &d, 1e-10).unwrap();
        let off = s.expected(&[2.0, -1.8], &d, 1e-10).unwrap();
        // frozen from adaptive quadrature of the written-out score against the N(0.2, 0.1) density
        assert!((at_t + 2.000_747_158_523).abs() < 1e-9, "{at_t}");
        assert!((off + 8.727_997_467_111).abs() < 1e-9, "{off}");
        assert!(off < at_t);
    }

    #[test]
    fn closed_form_partial_expectations_match_quadrature() {
        let dists = [
            Distribution::normal(0.2, 0.1).unwrap(),
            Distribution::standard_normal(),
            Distribution::mixture(vec![
                (0.3, Distribution::point(-0.5)),
                (0.7, Distribution::normal(1.0, 2.0).unwrap()),
            ])
            .unwrap(),
        ];
        let fns = [
            ScoreFn::Exp { scale: 20.0, rate: -1.0 },
            ScoreFn::exp(),
            ScoreFn::Linear {
                intercept: 0.5,
                slope: -2.0,
            },
        ];
        for d in &dists {
            for g in &fns {
                for x in [-1.0, 0.03, 0.9] {
                    let closed = g.partial_expectation(d, x, 1e-12).unwrap();
                    let quad = d
                        .try_expect(|y| if y <= x { g.value(y) } else { Ok(0.0) }, &[x], 1e-12)
                        .unwrap();
                    assert!((closed - quad).abs() < 1e-10 * closed.abs().max(1.0), "{g} {d} {x}: {closed} vs {quad}");
                }
                let closed = g.full_expectation(d, 1e-12).unwrap();
                let quad = d.try_expect(|y| g.value(y), &[], 1e-12).unwrap();
                assert!((closed - quad).abs() < 1e-10 * closed.abs().max(1.0));
            }
        }
    }

    #[test]
    fn domain_errors() {
        let g = ScoreFn::neg_log_neg();
        assert!(g.value(-1.0).is_ok());
        assert!(matches!(g.value(0.0), Err(Error::OutsideDomain { .. })));
        let s = ScoreSpec::fz0(0.05).unwrap();
        assert!(s.eval(&[0.0, 0.5], 0.0).is_err());
        assert!(s.eval(&[0.0], 0.0).is_err());
    }

    #[test]
    fn convexity_flags() {
        assert_eq!(ScoreFn::exp().convexity(), Convexity::StrictlyConvex);
        assert_eq!(ScoreFn::neg_log_neg().convexity(), Convexity::StrictlyConvex);
        assert_eq!(ScoreFn::identity().convexity(), Convexity::Convex);
        assert_eq!(ScoreFn::Power { exponent: 0.5 }.convexity(), Convexity::NotConvex);
        let f = FunctionalSpec::var_es(0.1).unwrap();
        assert!(ScoreSpec::new(f, vec![ScoreFn::Zero], ScoreFn::Power { exponent: 0.5 }, ScoreFn::Zero).is_err());
    }

    #[test]
    fn catalogue_parses_and_prints() {
        for s in ["zero", "linear(1,-2)", "exp", "exp(20,-1)", "neg_log_neg", "neg_log_neg(2)", "power(1.5)"] {
            let f: ScoreFn = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("exp(1)".parse::<ScoreFn>().is_err());
        assert!("cosh".parse::<ScoreFn>().is_err());
    }

    #[test]
    fn custom_functions() {
        let g = CustomFn::new("cube", |x| x * x * x, |x| 3.0 * x * x, Convexity::NotConvex).with_domain(0.0, 10.0);
        let f = ScoreFn::Custom(g);
        assert_eq!(f.value(2.0).unwrap(), 8.0);
        assert!(f.value(-1.0).is_err());
        assert!(f.second_derivative(1.0).is_err());
        let d = Distribution::normal(5.0, 1.0).unwrap();
        let v = f.partial_expectation(&d, 5.0, 1e-10);
        // normal tails leave the (0, 10) domain
        assert!(v.is_err());
    }
}
