use serde::Serialize;

use super::{c_bound, ScoreSpec};
use crate::distributions::Distribution;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// `(lo, hi]`
    HalfOpen,
    /// `[lo, hi]`
    Closed,
}

/// An oriented interval between two reals; `lo <= hi` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub closure: Closure,
}

impl Interval {
    /// `I(a, b) = (min, max]`.
    pub fn half_open(a: f64, b: f64) -> Self {
        Self {
            lo: a.min(b),
            hi: a.max(b),
            closure: Closure::HalfOpen,
        }
    }

    /// `[min, max]`.
    pub fn closed(a: f64, b: f64) -> Self {
        Self {
            lo: a.min(b),
            hi: a.max(b),
            closure: Closure::Closed,
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        match self.closure {
            Closure::HalfOpen => self.lo < y && y <= self.hi,
            Closure::Closed => self.lo <= y && y <= self.hi,
        }
    }
}

/// The two parts of `S(z', F) - S(z, F)` relative to a reference level `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreDiffDecomposition {
    pub r1: f64,
    pub r2: f64,
    pub w: f64,
}

impl ScoreDiffDecomposition {
    pub fn total(&self) -> f64 {
        self.r1 + self.r2
    }
}

/// Splits the expected-score difference `S(z', F) - S(z, F)` into the
/// quantile part `r1` and the last-coordinate part `r2`.
///
/// With `H_r(y) = G_r(y) + (p_r/q_r) G_k(w) y`:
///
/// ```text
/// r1 = sum_r (F(z'_r) - q_r) H_r(z'_r) - (F(z_r) - q_r) H_r(z_r)
///            - sgn(z'_r - z_r) * E[1{Y in I(z'_r, z_r)} H_r(Y)]
/// r2 = -Gk(z'_k) + Gk(z_k) + G_k(w)(z'_k - z_k)
///      + (G_k(z'_k) - G_k(w))(z'_k + C(z', F)) - (G_k(z_k) - G_k(w))(z_k + C(z, F))
/// ```
pub fn score_diff_decomposition(
    spec: &ScoreSpec,
    z_prime: &[f64],
    z: &[f64],
    w: f64,
    d: &Distribution,
    tol: f64,
) -> Result<ScoreDiffDecomposition> {
    let k = spec.k();
    check_dim(k, z_prime.len())?;
    check_dim(k, z.len())?;
    let functional = spec.functional();
    let gw = spec.gk(w)?;

    let mut r1 = 0.0;
    for (r, g) in spec.quantile_terms().iter().enumerate() {
        let q = functional.levels()[r];
        let slope = functional.ratio(r) * gw;
        let h = |y: f64| -> Result<f64> { Ok(g.value(y)? + slope * y) };
        let (a, b) = (z_prime[r], z[r]);
        r1 += (d.cdf(a) - q) * h(a)? - (d.cdf(b) - q) * h(b)?;
        if a != b {
            let iv = Interval::half_open(a, b);
            let inner = d.try_expect(|y| if iv.contains(y) { h(y) } else { Ok(0.0) }, &[iv.lo, iv.hi], tol)?;
            r1 -= (a - b).signum() * inner;
        }
    }

    let (ak, bk) = (z_prime[k - 1], z[k - 1]);
    let gk = spec.convex_term();
    let mut r2 = -gk.value(ak)? + gk.value(bk)? + gw * (ak - bk);
    r2 += (spec.gk(ak)? - gw) * (ak + c_bound(functional, z_prime, d)?);
    r2 -= (spec.gk(bk)? - gw) * (bk + c_bound(functional, z, d)?);
    Ok(ScoreDiffDecomposition { r1, r2, w })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Monotonicity {
    StrictlyIncreasing,
    Increasing,
    Violated { at: f64, slope: f64 },
}

/// Classifies `y -> G_r(y) + (p_r/q_r) G_k(w) y` on `interval` from its exact
/// derivative at `n` grid points (the open end of a half-open interval is
/// skipped). A zero derivative anywhere downgrades to non-strict.
pub fn quantile_term_monotonicity(spec: &ScoreSpec, r: usize, w: f64, interval: Interval, n: usize) -> Result<Monotonicity> {
    if r >= spec.k() - 1 {
        return Err(Error::invalid("quantile index", format!("{r} is not below k - 1 = {}", spec.k() - 1)));
    }
    let g = &spec.quantile_terms()[r];
    let slope = spec.functional().ratio(r) * spec.gk(w)?;
    let n = n.max(1);
    let width = interval.hi - interval.lo;
    let points: Vec<f64> = match interval.closure {
        Closure::Closed if n == 1 => vec![interval.lo],
        Closure::Closed => (0..n).map(|i| interval.lo + width * i as f64 / (n - 1) as f64).collect(),
        Closure::HalfOpen => (1..=n).map(|i| interval.lo + width * i as f64 / n as f64).collect(),
    };
    let mut strict = true;
    for y in points {
        let dv = g.derivative(y)? + slope;
        if dv < 0.0 {
            return Ok(Monotonicity::Violated { at: y, slope: dv });
        }
        if dv == 0.0 {
            strict = false;
        }
    }
    Ok(if strict {
        Monotonicity::StrictlyIncreasing
    } else {
        Monotonicity::Increasing
    })
}
