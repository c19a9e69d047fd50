//! Numerical consistency checks: grid plus pattern search for the minimiser
//! of the expected score, the cone counterexample, order sensitivity in the
//! last coordinate, and the data behind the `-C` / `-B` picture.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::Distribution;
use crate::domains::{Domain, Membership};
use crate::error::{check_dim, Error, Result};
use crate::format::fmt12;
use crate::scores::{b_bound, c_bound, quantile_term_monotonicity, Interval, Monotonicity, ScoreSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Grid points per axis.
    pub resolution: usize,
    /// Box half-width around `T(F)` when `bounds` is unset.
    pub half_width: f64,
    /// Explicit box `(lower, upper)`.
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
    pub gap_tol: f64,
    pub loc_tol: f64,
    /// Pattern search stops once its step drops below this.
    pub step_tol: f64,
    pub quad_tol: f64,
    /// Points evaluated before the grid.
    pub probes: Vec<Vec<f64>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            resolution: 41,
            half_width: 8.0,
            bounds: None,
            gap_tol: 1e-7,
            loc_tol: 1e-3,
            step_tol: 1e-6,
            quad_tol: 1e-10,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyVerdict {
    Consistent,
    Inconsistent,
    /// No violation found but the minimiser is not at `T(F)`.
    Inconclusive,
    /// `T(F)` is outside the domain.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationWitness {
    pub x: Vec<f64>,
    pub score: f64,
    pub score_at_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRecord {
    pub distribution: String,
    pub t: Vec<f64>,
    pub argmin: Vec<f64>,
    pub score_at_t: f64,
    pub score_at_argmin: f64,
    /// `S(argmin, F) - S(T(F), F)`.
    pub gap: f64,
    pub location_error: f64,
    pub grid_points: usize,
    /// Grid points skipped because evaluation failed.
    pub failed_points: usize,
    pub verdict: ConsistencyVerdict,
    pub witness: Option<ViolationWitness>,
}

/// Prerequisites for a strictness claim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Strictness {
    pub strictly_convex_last_term: bool,
    pub strictly_monotone_quantile_terms: bool,
    pub unique_quantiles: bool,
    /// All of the above and every record consistent.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub domain: String,
    pub verdict: ConsistencyVerdict,
    pub records: Vec<DistributionRecord>,
    pub strictness: Option<Strictness>,
    pub warnings: Vec<String>,
}

impl ConsistencyReport {
    pub fn witnesses(&self) -> impl Iterator<Item = &ViolationWitness> {
        self.records.iter().filter_map(|r| r.witness.as_ref())
    }
}

fn admissible(score: &ScoreSpec, domain: &Domain, x: &[f64]) -> bool {
    score.in_domain(x) && domain.contains(x, Membership::Declared).unwrap_or(false)
}

fn box_for(t: &[f64], cfg: &SearchConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    match &cfg.bounds {
        Some((lo, hi)) => {
            check_dim(t.len(), lo.len())?;
            check_dim(t.len(), hi.len())?;
            if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return Err(Error::invalid("search box", "lower bounds must lie below upper bounds"));
            }
            Ok((lo.clone(), hi.clone()))
        }
        None => Ok((
            t.iter().map(|v| v - cfg.half_width).collect(),
            t.iter().map(|v| v + cfg.half_width).collect(),
        )),
    }
}

fn grid_points(lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    let k = lo.len();
    let total = n.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; k];
            for j in (0..k).rev() {
                let i = idx % n;
                idx /= n;
                p[j] = if n == 1 {
                    0.5 * (lo[j] + hi[j])
                } else {
                    lo[j] + (hi[j] - lo[j]) * i as f64 / (n - 1) as f64
                };
            }
            p
        })
        .collect()
}

/// Compass search from `start` with an initial step `step`, halving the
/// step whenever no axis move improves.
fn pattern_search<F: Fn(&[f64]) -> Option<f64>>(f: F, start: Vec<f64>, start_value: f64, step: f64, step_tol: f64) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = start_value;
    let mut h = step;
    let mut iters = 0usize;
    while h >= step_tol && iters < 100_000 {
        iters += 1;
        let mut improved = false;
        for j in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[j] += dir * h;
                if let Some(fy) = f(&y) {
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, fx)
}

fn check_one(score: &ScoreSpec, domain: &Domain, d: &Distribution, cfg: &SearchConfig) -> Result<DistributionRecord> {
    let k = score.k();
    let t = score.functional().evaluate(d)?;
    let eval = |x: &[f64]| -> Option<f64> {
        if !admissible(score, domain, x) {
            return None;
        }
        score.expected(x, d, cfg.quad_tol).ok().filter(|v| v.is_finite())
    };
    let mut record = DistributionRecord {
        distribution: d.to_string(),
        t: t.clone(),
        argmin: t.clone(),
        score_at_t: f64::NAN,
        score_at_argmin: f64::NAN,
        gap: f64::NAN,
        location_error: f64::NAN,
        grid_points: 0,
        failed_points: 0,
        verdict: ConsistencyVerdict::Skipped,
        witness: None,
    };
    if !admissible(score, domain, &t) {
        return Ok(record);
    }
    let s_t = score.expected(&t, d, cfg.quad_tol)?;
    record.score_at_t = s_t;

    let (lo, hi) = box_for(&t, cfg)?;
    let mut candidates: Vec<Vec<f64>> = cfg.probes.iter().filter(|p| p.len() == k).cloned().collect();
    candidates.extend(grid_points(&lo, &hi, cfg.resolution.max(2)));
    let values: Vec<Option<Result<f64>>> = candidates
        .par_iter()
        .map(|x| admissible(score, domain, x).then(|| score.expected(x, d, cfg.quad_tol)))
        .collect();

    // the search starts from the best grid point, not from T(F)
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x, v) in candidates.iter().zip(values) {
        let v = match v {
            None => continue,
            Some(Ok(v)) if v.is_finite() => v,
            Some(_) => {
                record.failed_points += 1;
                continue;
            }
        };
        record.grid_points += 1;
        if v < s_t - cfg.gap_tol && record.witness.is_none() {
            record.witness = Some(ViolationWitness {
                x: x.clone(),
                score: v,
                score_at_t: s_t,
            });
        }
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x.clone(), v));
        }
    }
    let best = best.unwrap_or_else(|| (t.clone(), s_t));

    let cell = (0..k)
        .map(|j| (hi[j] - lo[j]) / (cfg.resolution.max(2) - 1) as f64)
        .fold(f64::INFINITY, f64::min);
    let (argmin, s_min) = pattern_search(eval, best.0, best.1, cell, cfg.step_tol);
    if s_min < s_t - cfg.gap_tol && record.witness.is_none() {
        record.witness = Some(ViolationWitness {
            x: argmin.clone(),
            score: s_min,
            score_at_t: s_t,
        });
    }
    record.location_error = argmin.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    record.gap = s_min - s_t;
    record.score_at_argmin = s_min;
    record.argmin = argmin;
    record.verdict = if record.witness.is_some() {
        ConsistencyVerdict::Inconsistent
    } else if record.location_error > cfg.loc_tol {
        ConsistencyVerdict::Inconclusive
    } else {
        ConsistencyVerdict::Consistent
    };
    Ok(record)
}

fn strictness(score: &ScoreSpec, dists: &[Distribution], records: &[DistributionRecord], cfg: &SearchConfig) -> Result<Strictness> {
    let k = score.k();
    let convex = score.convex_term().convexity() == crate::scores::Convexity::StrictlyConvex;
    let mut unique = true;
    for d in dists {
        for &q in score.functional().levels() {
            unique &= d.has_unique_quantile(q)?;
        }
    }
    // monotonicity over the searched box of every considered distribution
    let mut monotone = true;
    for rec in records.iter().filter(|r| r.verdict != ConsistencyVerdict::Skipped) {
        let (lo, hi) = box_for(&rec.t, cfg)?;
        let n = 21;
        for i in 0..n {
            let w = lo[k - 1] + (hi[k - 1] - lo[k - 1]) * i as f64 / (n - 1) as f64;
            if !score.convex_term().in_domain(w) {
                continue;
            }
            for r in 0..k - 1 {
                match quantile_term_monotonicity(score, r, w, Interval::closed(lo[r], hi[r]), 50) {
                    Ok(Monotonicity::StrictlyIncreasing) => {}
                    _ => monotone = false,
                }
            }
        }
    }
    let all_consistent = records.iter().all(|r| r.verdict == ConsistencyVerdict::Consistent);
    Ok(Strictness {
        strictly_convex_last_term: convex,
        strictly_monotone_quantile_terms: monotone,
        unique_quantiles: unique,
        strict: convex && monotone && unique && all_consistent,
    })
}

/// Searches each distribution's expected score over the domain for points
/// beating `T(F)`.
pub fn check_consistency(score: &ScoreSpec, domain: &Domain, dists: &[Distribution], cfg: &SearchConfig) -> Result<ConsistencyReport> {
    check_dim(domain.k(), score.k())?;
    if dists.is_empty() {
        return Err(Error::invalid("distributions", "at least one is required"));
    }
    if cfg.resolution < 2 {
        return Err(Error::invalid("resolution", "at least 2 points per axis"));
    }
    let records = dists.iter().map(|d| check_one(score, domain, d, cfg)).collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    for r in &records {
        if r.verdict == ConsistencyVerdict::Skipped {
            warnings.push(format!("T({}) = {:?} lies outside the domain; skipped", r.distribution, r.t));
        }
        if r.failed_points > 0 {
            warnings.push(format!("{} evaluation failures for {}", r.failed_points, r.distribution));
        }
    }
    let live: Vec<_> = records.iter().filter(|r| r.verdict != ConsistencyVerdict::Skipped).collect();
    let verdict = if live.is_empty() {
        ConsistencyVerdict::Skipped
    } else if live.iter().any(|r| r.verdict == ConsistencyVerdict::Inconsistent) {
        ConsistencyVerdict::Inconsistent
    } else if live.iter().any(|r| r.verdict == ConsistencyVerdict::Inconclusive) {
        ConsistencyVerdict::Inconclusive
    } else {
        ConsistencyVerdict::Consistent
    };
    let strictness = if verdict == ConsistencyVerdict::Consistent {
        Some(strictness(score, dists, &records, cfg)?)
    } else {
        None
    };
    Ok(ConsistencyReport {
        domain: domain.name(),
        verdict,
        records,
        strictness,
        warnings,
    })
}

/// The five numbers of the cone counterexample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleTable {
    pub alpha: f64,
    /// `S((0, 0), 0)`.
    pub score_origin_point_mass: f64,
    /// `S((2, -1.8), 0)`.
    pub score_probe_point_mass: f64,
    /// `T` of `normal(0.2, 0.1)`.
    pub t_normal: Vec<f64>,
    /// Expected score at `T(F)` under `normal(0.2, 0.1)`.
    pub score_t_normal: f64,
    /// Expected score at `(2, -1.8)` under `normal(0.2, 0.1)`.
    pub score_probe_normal: f64,
}

impl CounterexampleTable {
    pub fn point_mass_inconsistent(&self) -> bool {
        self.score_probe_point_mass < self.score_origin_point_mass
    }

    pub fn normal_inconsistent(&self) -> bool {
        self.score_probe_normal < self.score_t_normal
    }
}

pub const COUNTEREXAMPLE_PROBE: [f64; 2] = [2.0, -1.8];

pub fn reproduce_counterexample(alpha: f64) -> Result<CounterexampleTable> {
    let score = ScoreSpec::counterexample_cone(alpha)?;
    let normal = Distribution::normal(0.2, 0.1)?;
    let t = score.functional().evaluate(&normal)?;
    Ok(CounterexampleTable {
        alpha,
        score_origin_point_mass: score.eval(&[0.0, 0.0], 0.0)?,
        score_probe_point_mass: score.eval(&COUNTEREXAMPLE_PROBE, 0.0)?,
        score_t_normal: score.expected(&t, &normal, 1e-12)?,
        score_probe_normal: score.expected(&COUNTEREXAMPLE_PROBE, &normal, 1e-12)?,
        t_normal: t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub zk: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderSensitivity {
    /// `-C(z, F)`, where the curve should turn.
    pub turning_point: f64,
    pub passed: bool,
    /// First pair of grid values breaking the pattern.
    pub violation: Option<(f64, f64)>,
    pub skipped_points: usize,
    pub curve: Vec<CurvePoint>,
}

/// Checks that the expected score falls along the last coordinate up to
/// `-C(z, F)` and rises after it.
pub fn order_sensitivity_k(score: &ScoreSpec, d: &Distribution, z: &[f64], zk_grid: &[f64], tol: f64) -> Result<OrderSensitivity> {
    let k = score.k();
    check_dim(k, z.len())?;
    let turning = -c_bound(score.functional(), z, d)?;
    let mut grid: Vec<f64> = zk_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut curve = Vec::with_capacity(grid.len());
    let mut skipped = 0;
    for &zk in &grid {
        let mut x = z.to_vec();
        x[k - 1] = zk;
        if !score.in_domain(&x) {
            skipped += 1;
            continue;
        }
        curve.push(CurvePoint {
            zk,
            score: score.expected(&x, d, 1e-12)?,
        });
    }
    let mut violation = None;
    for w in curve.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let bad = if b.zk <= turning {
            b.score > a.score + tol
        } else if a.zk >= turning {
            b.score < a.score - tol
        } else {
            false
        };
        if bad {
            violation = Some((a.zk, b.zk));
            break;
        }
    }
    Ok(OrderSensitivity {
        turning_point: turning,
        passed: violation.is_none(),
        violation,
        skipped_points: skipped,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsRow {
    pub z1: f64,
    pub neg_c: f64,
    pub neg_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreCell {
    pub z1: f64,
    pub z2: f64,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Data {
    pub t: Vec<f64>,
    /// `-C` and `-B` at `z1 = t1`; equal by construction.
    pub meeting_value: f64,
    /// Slopes of `-B` left and right of `t1`, from the emitted rows.
    pub slope_left: f64,
    pub slope_right: f64,
    pub curves: Vec<BoundsRow>,
    pub grid: Vec<ScoreCell>,
}

impl Figure1Data {
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("z1,neg_C,neg_B\n");
        for r in &self.curves {
            s.push_str(&format!("{},{},{}\n", fmt12(r.z1), fmt12(r.neg_c), fmt12(r.neg_b)));
        }
        s
    }

    pub fn grid_csv(&self) -> String {
        let mut s = String::from("z1,z2,score\n");
        for c in &self.grid {
            let v = c.score.map(fmt12).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", fmt12(c.z1), fmt12(c.z2), v));
        }
        s
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Curves `z1 -> -C(z, F)`, `z1 -> -B(z, T(F))` and the expected-score grid
/// over `z1_range x z2_range` (row-major in `z1`). `t1` is always among the
/// curve abscissae.
pub fn figure1_grid(score: &ScoreSpec, d: &Distribution, z1_range: (f64, f64), z2_range: (f64, f64), resolution: usize) -> Result<Figure1Data> {
    if score.k() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: score.k(),
        });
    }
    if resolution < 3 || !(z1_range.0 < z1_range.1) || !(z2_range.0 < z2_range.1) {
        return Err(Error::invalid("figure grid", "need resolution >= 3 and increasing ranges"));
    }
    let spec = score.functional();
    let t = spec.evaluate(d)?;
    let mut z1s = linspace(z1_range.0, z1_range.1, resolution);
    if z1_range.0 < t[0] && t[0] < z1_range.1 && !z1s.contains(&t[0]) {
        z1s.push(t[0]);
        z1s.sort_by(f64::total_cmp);
    }
    let curves = z1s
        .iter()
        .map(|&z1| {
            let z = [z1, t[1]];
            Ok(BoundsRow {
                z1,
                neg_c: -c_bound(spec, &z, d)?,
                neg_b: -b_bound(spec, &z, &t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let neg_c_t = -c_bound(spec, &t, d)?;
    let neg_b_t = -b_bound(spec, &t, &t)?;
    if (neg_c_t - neg_b_t).abs() > 1e-9 * neg_b_t.abs().max(1.0) {
        return Err(Error::Precondition(format!("-C(t) = {neg_c_t} and -B(t) = {neg_b_t} differ")));
    }

    let slope = |rows: &[&BoundsRow]| -> f64 {
        match rows {
            [a, .., b] => (b.neg_b - a.neg_b) / (b.z1 - a.z1),
            _ => f64::NAN,
        }
    };
    let left: Vec<&BoundsRow> = curves.iter().filter(|r| r.z1 <= t[0]).collect();
    let right: Vec<&BoundsRow> = curves.iter().filter(|r| r.z1 >= t[0]).collect();

    let z2s = linspace(z2_range.0, z2_range.1, resolution);
    let cells: Vec<(f64, f64)> = z1s.iter().flat_map(|&a| z2s.iter().map(move |&b| (a, b))).collect();
    let grid = cells
        .par_iter()
        .map(|&(z1, z2)| ScoreCell {
            z1,
            z2,
            score: score
                .in_domain(&[z1, z2])
                .then(|| score.expected(&[z1, z2], d, 1e-10).ok())
                .flatten(),
        })
        .collect();

    Ok(Figure1Data {
        meeting_value: neg_b_t,
        slope_left: slope(&left),
        slope_right: slope(&right),
        t,
        curves,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_point_mass_values() {
        let tab = reproduce_counterexample(0.05).unwrap();
        assert_eq!(tab.score_origin_point_mass, -2.0);
        assert!((tab.score_probe_point_mass + 11.610_108_753_1).abs() < 1e-9);
        assert!(tab.point_mass_inconsistent() && tab.normal_inconsistent());
        assert!((tab.t_normal[0] - 0.035_514_637_3).abs() < 1e-9);
    }

    #[test]
    fn order_sensitivity_turning_points() {
        let cone = ScoreSpec::counterexample_cone(0.05).unwrap();
        let grid: Vec<f64> = (0..41).map(|i| -60.0 + i as f64 * 1.5).collect();
        let res = order_sensitivity_k(&cone, &Distribution::point(0.0), &[2.0, 0.0], &grid, 1e-7).unwrap();
        assert!((res.turning_point + 38.0).abs() < 1e-12);
        assert!(res.passed, "{res:?}");
        let single = order_sensitivity_k(&cone, &Distribution::point(0.0), &[2.0, 0.0], &[1.0], 1e-7).unwrap();
        assert!(single.passed);

        let fz0 = ScoreSpec::fz0(0.05).unwrap();
        let d = Distribution::standard_normal();
        let t = fz0.functional().evaluate(&d).unwrap();
        let grid: Vec<f64> = (1..90).map(|i| -6.0 + i as f64 * 0.075).collect();
        let res = order_sensitivity_k(&fz0, &d, &t, &grid, 1e-7).unwrap();
        assert!((res.turning_point - t[1]).abs() < 1e-9);
        assert!(res.passed);
        assert!(res.skipped_points > 0);
    }

    #[test]
    fn fz0_consistent_on_negative_a0() {
        let score = ScoreSpec::fz0(0.05).unwrap();
        let spec = score.functional().clone();
        let domain = Domain::a0(&spec).intersect(&Domain::half_strip(2).unwrap()).unwrap();
        let dists = [Distribution::standard_normal(), Distribution::normal(-1.0, 0.5).unwrap()];
        // an even resolution keeps T(F) off the grid, so the pattern search has to find it
        for resolution in [21, 20] {
            let cfg = SearchConfig {
                resolution,
                ..SearchConfig::default()
            };
            let rep = check_consistency(&score, &domain, &dists, &cfg).unwrap();
            assert_eq!(rep.verdict, ConsistencyVerdict::Consistent, "{rep:#?}");
            for r in &rep.records {
                assert!(r.location_error < 1e-3, "{r:?}");
                assert!(r.gap >= -1e-7);
            }
            assert!(rep.strictness.as_ref().unwrap().strict);
        }
    }

    #[test]
    fn cone_inconsistent() {
        let score = ScoreSpec::counterexample_cone(0.05).unwrap();
        let cone = Domain::cone_counterexample();
        let cfg = SearchConfig {
            resolution: 21,
            probes: vec![COUNTEREXAMPLE_PROBE.to_vec()],
            ..SearchConfig::default()
        };
        let rep = check_consistency(&score, &cone, &[Distribution::point(0.0)], &cfg).unwrap();
        assert_eq!(rep.verdict, ConsistencyVerdict::Inconsistent);
        let w = rep.witnesses().next().unwrap();
        assert_eq!(w.x, COUNTEREXAMPLE_PROBE.to_vec());
        assert!((w.score + 11.61).abs() < 0.01 && w.score_at_t == -2.0);
        assert!(rep.strictness.is_none());
    }

    #[test]
    fn figure_curves() {
        let score = ScoreSpec::fz0(0.05).unwrap();
        let d = Distribution::standard_normal();
        let fig = figure1_grid(&score, &d, (-4.0, 1.0), (-5.0, -0.5), 26).unwrap();
        assert!((fig.meeting_value - fig.t[1]).abs() < 1e-12);
        assert!((fig.slope_left - 1.0).abs() < 1e-9);
        assert!((fig.slope_right + 19.0).abs() < 1e-9);
        for r in &fig.curves {
            assert!(r.neg_b <= r.neg_c + 1e-9);
        }
        let csv = fig.curves_csv();
        assert!(csv.starts_with("z1,neg_C,neg_B\n"));
        assert_eq!(fig.grid.len(), fig.curves.len() * 26);
        assert!(fig.grid_csv().lines().count() == fig.grid.len() + 1);
        let cone = ScoreSpec::counterexample_cone(0.05).unwrap();
        assert!(figure1_grid(&cone, &d, (1.0, 0.0), (-1.0, 0.0), 10).is_err());
    }
}
