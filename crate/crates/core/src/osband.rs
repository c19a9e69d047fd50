//! Identification functions and the matrix `h` linking expected-score
//! gradients to them: recovery from finite differences, path-integral
//! reconstruction of score differences, and positive semi-definiteness scans.

use std::cell::RefCell;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::Distribution;
use crate::domains::{Domain, Membership};
use crate::error::{check_dim, Error, Result};
use crate::functionals::FunctionalSpec;
use crate::quadrature::{integrate_with_breaks, QuadOptions};
use crate::scores::{c_bound, ScoreSpec};

/// Largest accepted condition number of the `Vbar` matrix in [`recover_h`].
pub const MAX_CONDITION: f64 = 1e8;

/// `V(x, y)`: `1{y <= x_r} - q_r` for the quantile coordinates and the
/// expected-shortfall bracket for the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    spec: FunctionalSpec,
}

impl Identification {
    pub fn new(spec: FunctionalSpec) -> Self {
        Self { spec }
    }

    pub fn k(&self) -> usize {
        self.spec.k()
    }

    pub fn eval(&self, x: &[f64], y: f64) -> Result<Vec<f64>> {
        let k = self.k();
        check_dim(k, x.len())?;
        let mut v = Vec::with_capacity(k);
        let mut last = x[k - 1];
        for (m, &q) in self.spec.levels().iter().enumerate() {
            let hit = y <= x[m];
            v.push(if hit { 1.0 - q } else { -q });
            let excess = if hit { x[m] - y } else { 0.0 };
            last += self.spec.ratio(m) * (excess - q * x[m]);
        }
        v.push(last);
        Ok(v)
    }

    /// `E_F V(x, Y)`.
    pub fn mean(&self, x: &[f64], d: &Distribution) -> Result<Vec<f64>> {
        let k = self.k();
        check_dim(k, x.len())?;
        let mut v: Vec<f64> = self.spec.levels().iter().zip(x).map(|(q, &xm)| d.cdf(xm) - q).collect();
        v.push(x[k - 1] + c_bound(&self.spec, x, d)?);
        Ok(v)
    }
}

pub fn identification_eval(spec: &FunctionalSpec, x: &[f64], y: f64) -> Result<Vec<f64>> {
    Identification::new(spec.clone()).eval(x, y)
}

pub fn vbar(spec: &FunctionalSpec, x: &[f64], d: &Distribution) -> Result<Vec<f64>> {
    Identification::new(spec.clone()).mean(x, d)
}

/// A `k x k` matrix at a point, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HMatrix {
    pub x: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    /// Condition number of the linear system it was recovered from, if any.
    pub cond: Option<f64>,
}

impl HMatrix {
    fn from_dmatrix(x: &[f64], m: &DMatrix<f64>, cond: Option<f64>) -> Self {
        let rows = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
        Self {
            x: x.to_vec(),
            rows,
            cond,
        }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_fn(k, k, |i, j| self.rows[i][j])
    }

    /// Smallest eigenvalue of `(h + h^T) / 2`.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        let m = self.to_dmatrix();
        let sym = (&m + m.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    /// Largest absolute off-diagonal entry.
    pub fn max_off_diagonal(&self) -> f64 {
        let k = self.k();
        (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.rows[i][j].abs())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.singular_values();
    let (max, min) = (s.max(), s.min());
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Central finite-difference gradient of `x -> S(x, F)`.
pub fn expected_score_gradient(score: &ScoreSpec, x: &[f64], d: &Distribution, step: f64) -> Result<Vec<f64>> {
    let k = score.k();
    check_dim(k, x.len())?;
    (0..k)
        .map(|j| {
            let (mut up, mut down) = (x.to_vec(), x.to_vec());
            up[j] += step;
            down[j] -= step;
            for p in [&up, &down] {
                if !score.in_domain(p) {
                    return Err(Error::OutsideDomain {
                        function: "score".into(),
                        x: p[j],
                    });
                }
            }
            Ok((score.expected(&up, d, 1e-13)? - score.expected(&down, d, 1e-13)?) / (2.0 * step))
        })
        .collect()
}

/// Solves `[grad S(x, F_i)]_i = h(x) [Vbar(x, F_i)]_i` for `h(x)` using `k`
/// distributions.
pub fn recover_h(score: &ScoreSpec, x: &[f64], dists: &[Distribution], fd_step: f64) -> Result<HMatrix> {
    let k = score.k();
    check_dim(k, x.len())?;
    check_dim(k, dists.len())?;
    if !(fd_step > 0.0) {
        return Err(Error::invalid("fd_step", "must be positive"));
    }
    let id = Identification::new(score.functional().clone());
    let mut v = DMatrix::zeros(k, k);
    let mut g = DMatrix::zeros(k, k);
    for (i, d) in dists.iter().enumerate() {
        let vb = id.mean(x, d)?;
        let gr = expected_score_gradient(score, x, d, fd_step)?;
        for j in 0..k {
            v[(j, i)] = vb[j];
            g[(j, i)] = gr[j];
        }
    }
    let cond = condition_number(&v);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned { cond });
    }
    let inv = v.try_inverse().ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    Ok(HMatrix::from_dmatrix(x, &(g * inv), Some(cond)))
}

/// The diagonal `h` implied by the score family:
/// `h_rr = G_r'(x_r) + (p_r/q_r) G_k(x_k)`, `h_kk = G_k'(x_k)`.
pub fn analytic_h(score: &ScoreSpec, x: &[f64]) -> Result<HMatrix> {
    let k = score.k();
    check_dim(k, x.len())?;
    let spec = score.functional();
    let gk = score.gk(x[k - 1])?;
    let mut m = DMatrix::zeros(k, k);
    for (r, g) in score.quantile_terms().iter().enumerate() {
        m[(r, r)] = g.derivative(x[r])? + spec.ratio(r) * gk;
    }
    m[(k - 1, k - 1)] = score.gk_prime(x[k - 1])?;
    Ok(HMatrix::from_dmatrix(x, &m, None))
}

/// Where `h` comes from along a path.
#[derive(Debug, Clone, PartialEq)]
pub enum HSource {
    Analytic,
    Recovered { dists: Vec<Distribution>, fd_step: f64 },
}

impl HSource {
    fn at(&self, score: &ScoreSpec, x: &[f64]) -> Result<HMatrix> {
        match self {
            HSource::Analytic => analytic_h(score, x),
            HSource::Recovered { dists, fd_step } => recover_h(score, x, dists, *fd_step),
        }
    }
}

/// A piecewise-affine path through the interior of the score's domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathPolyline {
    vertices: Vec<Vec<f64>>,
}

impl PathPolyline {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::invalid("polyline", "at least two vertices are required"));
        }
        let k = vertices[0].len();
        for v in &vertices {
            check_dim(k, v.len())?;
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid("polyline", "vertices must be finite"));
            }
        }
        Ok(Self { vertices })
    }

    pub fn straight(from: Vec<f64>, to: Vec<f64>) -> Result<Self> {
        Self::new(vec![from, to])
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn start(&self) -> &[f64] {
        &self.vertices[0]
    }

    pub fn end(&self) -> &[f64] {
        self.vertices.last().expect("at least two vertices")
    }

    fn segments(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.vertices.windows(2).map(|w| (w[0].as_slice(), w[1].as_slice()))
    }

    /// Whether every vertex lies strictly inside the score's domain and,
    /// if given, the action domain.
    pub fn is_interior(&self, score: &ScoreSpec, domain: Option<&Domain>) -> Result<bool> {
        for v in &self.vertices {
            check_dim(score.k(), v.len())?;
            if !score.in_domain(v) {
                return Ok(false);
            }
            if let Some(a) = domain {
                if !a.contains(v, Membership::Interior)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

fn path_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        max_subintervals: 500,
    }
}

/// Integrates `lambda -> integrand(gamma(lambda)) . gamma'` over every
/// segment, splitting at the given per-segment break parameters.
fn integrate_along<F>(path: &PathPolyline, breaks: impl Fn(&[f64], &[f64]) -> Vec<f64>, integrand: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut total = 0.0;
    for (a, b) in path.segments() {
        let dir: Vec<f64> = a.iter().zip(b).map(|(u, v)| v - u).collect();
        if dir.iter().all(|c| *c == 0.0) {
            continue;
        }
        let failure = RefCell::new(None);
        let f = |lam: f64| -> f64 {
            let p: Vec<f64> = a.iter().zip(&dir).map(|(u, dv)| u + lam * dv).collect();
            match integrand(&p) {
                Ok(g) => g.iter().zip(&dir).map(|(gi, dv)| gi * dv).sum(),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        };
        let r = integrate_with_breaks(f, 0.0, 1.0, &breaks(a, b), path_opts())?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        total += r.value;
    }
    Ok(total)
}

/// Reconstructs `S(end, F) - S(start, F)` from `h(x) Vbar(x, F)` along the path.
pub fn path_integral_diff(score: &ScoreSpec, path: &PathPolyline, d: &Distribution, source: &HSource) -> Result<f64> {
    check_dim(score.k(), path.start().len())?;
    if !path.is_interior(score, None)? {
        return Err(Error::Precondition("path leaves the interior of the score's domain".into()));
    }
    let id = Identification::new(score.functional().clone());
    integrate_along(path, |_, _| Vec::new(), |p| Ok(source.at(score, p)?.apply(&id.mean(p, d)?)))
}

/// Reconstructs `S(end, y) - S(start, y)` from `h(x) V(x, y)`, splitting
/// segments where a quantile coordinate crosses `y`.
pub fn pointwise_path_diff(score: &ScoreSpec, path: &PathPolyline, y: f64, source: &HSource) -> Result<f64> {
    let k = score.k();
    check_dim(k, path.start().len())?;
    if !path.is_interior(score, None)? {
        return Err(Error::Precondition("path leaves the interior of the score's domain".into()));
    }
    let id = Identification::new(score.functional().clone());
    let crossings = |a: &[f64], b: &[f64]| -> Vec<f64> {
        (0..k - 1)
            .filter(|&r| a[r] != b[r])
            .map(|r| (y - a[r]) / (b[r] - a[r]))
            .filter(|lam| *lam > 0.0 && *lam < 1.0)
            .collect()
    };
    integrate_along(path, crossings, |p| Ok(source.at(score, p)?.apply(&id.eval(p, y)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdPoint {
    pub x: Vec<f64>,
    pub min_eigenvalue: Option<f64>,
    pub cond: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdReport {
    pub tol: f64,
    pub points: Vec<PsdPoint>,
    pub evaluated: usize,
    pub failures: usize,
    pub min_eigenvalue: f64,
    pub median_eigenvalue: f64,
    /// Share of evaluated points with minimum eigenvalue above `tol`.
    pub positive_fraction: f64,
}

/// Recovers `h` at each grid point and reports the smallest eigenvalue of
/// its symmetric part.
pub fn psd_scan(score: &ScoreSpec, domain: &Domain, grid: &[Vec<f64>], dists: &[Distribution], fd_step: f64, tol: f64) -> Result<PsdReport> {
    check_dim(score.k(), domain.k())?;
    check_dim(score.k(), dists.len())?;
    let points: Vec<PsdPoint> = grid
        .par_iter()
        .map(|x| {
            let interior = x.len() == score.k() && score.in_domain(x) && domain.contains(x, Membership::Interior).unwrap_or(false);
            let res = if interior {
                recover_h(score, x, dists, fd_step)
            } else {
                Err(Error::Precondition("grid point is not interior".into()))
            };
            match res {
                Ok(h) => PsdPoint {
                    x: x.clone(),
                    min_eigenvalue: Some(h.min_symmetric_eigenvalue()),
                    cond: h.cond,
                    error: None,
                },
                Err(e) => PsdPoint {
                    x: x.clone(),
                    min_eigenvalue: None,
                    cond: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut eigs: Vec<f64> = points.iter().filter_map(|p| p.min_eigenvalue).collect();
    eigs.sort_by(f64::total_cmp);
    let evaluated = eigs.len();
    let positive = eigs.iter().filter(|e| **e > tol).count();
    Ok(PsdReport {
        tol,
        failures: points.len() - evaluated,
        evaluated,
        min_eigenvalue: eigs.first().copied().unwrap_or(f64::NAN),
        median_eigenvalue: if evaluated == 0 { f64::NAN } else { eigs[evaluated / 2] },
        positive_fraction: if evaluated == 0 { 0.0 } else { positive as f64 / evaluated as f64 },
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::ScoreFn;

    fn dists() -> Vec<Distribution> {
        vec![Distribution::normal(0.0, 1.0).unwrap(), Distribution::normal(1.0, 0.5).unwrap()]
    }

    #[test]
    fn identification_mean_vanishes_at_t() {
        let spec = FunctionalSpec::var_es(0.05).unwrap();
        for d in [Distribution::standard_normal(), Distribution::normal(0.2, 0.1).unwrap()] {
            let t = spec.evaluate(&d).unwrap();
            let v = vbar(&spec, &t, &d).unwrap();
            assert!(v.iter().all(|c| c.abs() < 1e-9), "{v:?}");
            let id = Identification::new(spec.clone());
            let by_quadrature = d
                .expect(|y| id.eval(&t, y).unwrap()[1], &[t[0]], 1e-12)
                .unwrap();
            assert!(by_quadrature.abs() < 1e-7);
        }
        // under a point mass the first entry is 1 - alpha at x = y
        assert_eq!(identification_eval(&spec, &[0.0, 0.0], 0.0).unwrap(), vec![0.95, 0.0]);
    }

    #[test]
    fn cone_h_matches_hand_form() {
        let score = ScoreSpec::counterexample_cone(0.05).unwrap();
        let x: [f64; 2] = [1.0, 0.2];
        let h = recover_h(&score, &x, &dists(), 1e-5).unwrap();
        let h11 = (x[1].exp() - (-x[0]).exp()) / 0.05;
        assert!((h.get(0, 0) - h11).abs() < 1e-4, "{h:?}");
        assert!((h.get(1, 1) - x[1].exp()).abs() < 1e-4);
        assert!(h.max_off_diagonal() < 1e-4);
        let a = analytic_h(&score, &x).unwrap();
        assert!((a.get(0, 0) - h11).abs() < 1e-12);
    }

    #[test]
    fn linear_last_term_gives_zero_hkk() {
        let spec = FunctionalSpec::var_es(0.05).unwrap();
        let score = ScoreSpec::new(spec, vec![ScoreFn::exp()], ScoreFn::identity(), ScoreFn::Zero).unwrap();
        let h = recover_h(&score, &[0.3, -0.2], &dists(), 1e-5).unwrap();
        assert!(h.get(1, 1).abs() < 1e-5);
    }

    #[test]
    fn ill_conditioned_pair() {
        let score = ScoreSpec::fz0(0.05).unwrap();
        let same = vec![Distribution::standard_normal(), Distribution::standard_normal()];
        assert!(matches!(recover_h(&score, &[-1.0, -2.0], &same, 1e-5), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn straight_path_reconstruction() {
        let score = ScoreSpec::fz0(0.05).unwrap();
        let d = Distribution::standard_normal();
        let path = PathPolyline::straight(vec![-2.5, -3.0], vec![-0.5, -1.0]).unwrap();
        let direct = score.expected(path.end(), &d, 1e-13).unwrap() - score.expected(path.start(), &d, 1e-13).unwrap();
        let analytic = path_integral_diff(&score, &path, &d, &HSource::Analytic).unwrap();
        assert!((analytic - direct).abs() < 1e-8 * direct.abs().max(1.0));
        let rec = HSource::Recovered {
            dists: vec![Distribution::normal(-1.0, 1.0).unwrap(), Distribution::normal(0.5, 2.0).unwrap()],
            fd_step: 1e-5,
        };
        let recovered = path_integral_diff(&score, &path, &d, &rec).unwrap();
        assert!((recovered - direct).abs() < 1e-6 * direct.abs().max(1.0));
        let constant = PathPolyline::straight(vec![-1.0, -1.0], vec![-1.0, -1.0]).unwrap();
        assert_eq!(path_integral_diff(&score, &constant, &d, &HSource::Analytic).unwrap(), 0.0);
    }

    #[test]
    fn pointwise_reconstruction_with_crossings() {
        let score = ScoreSpec::counterexample_cone(0.05).unwrap();
        let path = PathPolyline::straight(vec![1.0, -0.5], vec![2.0, -0.5]).unwrap();
        let got = pointwise_path_diff(&score, &path, 0.0, &HSource::Analytic).unwrap();
        let want = score.eval(&[2.0, -0.5], 0.0).unwrap() - score.eval(&[1.0, -0.5], 0.0).unwrap();
        assert!((got - want).abs() < 1e-9);
        // x1 crosses y = 1.5 mid-segment and y = 1.0 at a vertex
        let bent = PathPolyline::new(vec![vec![0.5, 0.0], vec![1.0, 0.3], vec![2.0, -0.4]]).unwrap();
        for y in [1.5, 1.0] {
            let got = pointwise_path_diff(&score, &bent, y, &HSource::Analytic).unwrap();
            let want = score.eval(bent.end(), y).unwrap() - score.eval(bent.start(), y).unwrap();
            assert!((got - want).abs() < 1e-8, "y = {y}: {got} vs {want}");
        }
    }

    #[test]
    fn psd_on_presets() {
        let fz0 = ScoreSpec::fz0(0.05).unwrap();
        let spec = fz0.functional().clone();
        let domain = Domain::a0(&spec).intersect(&Domain::half_strip(2).unwrap()).unwrap();
        let grid: Vec<Vec<f64>> = (0..6)
            .flat_map(|i| (0..6).map(move |j| vec![-3.0 + 0.5 * i as f64, -4.0 + 0.6 * j as f64]))
            .collect();
        let rep = psd_scan(&fz0, &domain, &grid, &dists(), 1e-5, 1e-8).unwrap();
        assert!(rep.evaluated > 0 && rep.failures > 0);
        assert!(rep.min_eigenvalue > -1e-6);
        assert_eq!(rep.positive_fraction, 1.0);
    }
}
