//! Score differences built from identification functions and from convex
//! potentials.

use super::ScoreFn;
use crate::error::{check_dim, Error, Result};
use crate::quadrature::{integrate_with_breaks, QuadOptions};

/// `sum_m int_{z_m}^{x_m} g_m(v) V_m(v, y) dv`, each component integrated
/// between its own endpoints with a forced break at `v = y`.
pub fn diagonal_score_diff(
    g: &[ScoreFn],
    v: &[&dyn Fn(f64, f64) -> f64],
    x: &[f64],
    z: &[f64],
    y: f64,
) -> Result<f64> {
    let k = g.len();
    check_dim(k, v.len())?;
    check_dim(k, x.len())?;
    check_dim(k, z.len())?;
    let opts = QuadOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        max_subintervals: 2000,
    };
    let mut total = 0.0;
    for m in 0..k {
        if x[m] == z[m] {
            continue;
        }
        let (lo, hi) = (z[m].min(x[m]), z[m].max(x[m]));
        if !(g[m].in_domain(lo) && g[m].in_domain(hi)) {
            return Err(Error::OutsideDomain {
                function: g[m].to_string(),
                x: if g[m].in_domain(lo) { hi } else { lo },
            });
        }
        let vm = v[m];
        let gm = &g[m];
        let r = integrate_with_breaks(|s| gm.value(s).unwrap_or(f64::NAN) * vm(s, y), z[m], x[m], &[y], opts)?;
        total += r.value;
    }
    Ok(total)
}

/// A twice differentiable convex function on (a subset of) `R^k`.
pub trait Potential {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// `phi(x) = sum_m c_m x_m^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPotential {
    pub coeffs: Vec<f64>,
}

impl QuadraticPotential {
    pub fn unit(k: usize) -> Self {
        Self { coeffs: vec![1.0; k] }
    }
}

impl Potential for QuadraticPotential {
    fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(c, v)| c * v * v).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.coeffs.iter().zip(x).map(|(c, v)| 2.0 * c * v).collect()
    }
}

/// `phi(x) + beta . x + alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineShift<P> {
    pub inner: P,
    pub beta: Vec<f64>,
    pub alpha: f64,
}

impl<P: Potential> Potential for AffineShift<P> {
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>() + self.alpha
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.inner.gradient(x);
        for (gi, b) in g.iter_mut().zip(&self.beta) {
            *gi += b;
        }
        g
    }
}

type VecFn<T> = Box<dyn Fn(&[f64]) -> T + Send + Sync>;

/// A potential given by closures for its value and gradient.
pub struct FnPotential {
    value: VecFn<f64>,
    gradient: VecFn<Vec<f64>>,
}

impl FnPotential {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }
}

impl Potential for FnPotential {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}

/// `T(x) - T(z)` with `T(v) = sum_m d_m phi(v) (q(y) v_m - p_m(y)) - phi(v) q(y)`.
pub fn phi_score_diff<P: Potential + ?Sized>(
    phi: &P,
    q: &ScoreFn,
    p: &[ScoreFn],
    x: &[f64],
    z: &[f64],
    y: f64,
) -> Result<f64> {
    let k = p.len();
    check_dim(k, x.len())?;
    check_dim(k, z.len())?;
    let qy = q.value(y)?;
    let py: Vec<f64> = p.iter().map(|f| f.value(y)).collect::<Result<_>>()?;
    let term = |v: &[f64]| -> Result<f64> {
        let grad = phi.gradient(v);
        check_dim(k, grad.len())?;
        let linear: f64 = grad.iter().zip(v).zip(&py).map(|((g, vm), pm)| g * (qy * vm - pm)).sum();
        Ok(linear - phi.value(v) * qy)
    };
    Ok(term(x)? - term(z)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pinball(v: f64, y: f64) -> f64 {
        (if y <= v { 1.0 } else { 0.0 }) - 0.5
    }

    #[test]
    fn pinball_differences() {
        let g = [ScoreFn::constant(1.0)];
        let v: [&dyn Fn(f64, f64) -> f64; 1] = [&pinball];
        assert!(diagonal_score_diff(&g, &v, &[2.0], &[0.0], 1.0).unwrap().abs() < 1e-14);
        assert!((diagonal_score_diff(&g, &v, &[2.0], &[0.0], 3.0).unwrap() + 1.0).abs() < 1e-14);
        assert_eq!(diagonal_score_diff(&g, &v, &[2.0], &[2.0], 3.0).unwrap(), 0.0);
    }

    #[test]
    fn per_component_bounds() {
        // g = 1 and V_m(v, y) = v - y give (x_m - y)^2 / 2 - (z_m - y)^2 / 2 per component
        let g = [ScoreFn::constant(1.0), ScoreFn::constant(1.0)];
        let id = |v: f64, y: f64| v - y;
        let v: [&dyn Fn(f64, f64) -> f64; 2] = [&id, &id];
        let (x, z, y): ([f64; 2], [f64; 2], f64) = ([1.5, -2.0], [0.5, 3.0], 0.25);
        let expect: f64 = (0..2).map(|m| 0.5 * ((x[m] - y).powi(2) - (z[m] - y).powi(2))).sum();
        let got = diagonal_score_diff(&g, &v, &x, &z, y).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn quadratic_potential_squared_error() {
        let phi = QuadraticPotential::unit(1);
        let q = ScoreFn::constant(1.0);
        let p = [ScoreFn::identity()];
        let (x, z, y) = (1.7, -0.4, 0.9);
        let got = phi_score_diff(&phi, &q, &p, &[x], &[z], y).unwrap();
        assert!((got - ((x - y).powi(2) - (z - y).powi(2))).abs() < 1e-12);
        assert_eq!(phi_score_diff(&phi, &q, &p, &[x], &[x], y).unwrap(), 0.0);
    }

    #[test]
    fn affine_shift_leaves_difference() {
        let base = QuadraticPotential { coeffs: vec![1.0, 3.0] };
        let shifted = AffineShift {
            inner: base.clone(),
            beta: vec![0.7, -2.5],
            alpha: 11.0,
        };
        let q = ScoreFn::constant(1.0);
        let p = [ScoreFn::identity(), ScoreFn::Power { exponent: 2.0 }];
        let (x, z, y) = ([0.3, 1.1], [-0.8, 2.0], 1.3);
        let a = phi_score_diff(&base, &q, &p, &x, &z, y).unwrap();
        let b = phi_score_diff(&shifted, &q, &p, &x, &z, y).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn closure_potential() {
        let phi = FnPotential::new(|x: &[f64]| x[0].exp(), |x: &[f64]| vec![x[0].exp()]);
        let q = ScoreFn::constant(1.0);
        let p = [ScoreFn::identity()];
        // exp potential gives the Bregman divergence of exp: e^x (x - y - 1) - e^z (z - y - 1)
        let (x, z, y) = (0.4, -0.3, 0.1);
        let got = phi_score_diff(&phi, &q, &p, &[x], &[z], y).unwrap();
        let want = x.exp() * (x - y - 1.0) - z.exp() * (z - y - 1.0);
        assert!((got - want).abs() < 1e-14);
    }
}
