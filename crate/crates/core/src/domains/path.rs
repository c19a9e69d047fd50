//! Axis-aligned certificate paths from a forecast `x` toward a target `t`.
//!
//! A certificate `z(0) = x, ..., z(N)` moves one coordinate at a time,
//! monotonically toward `t`, stays inside the domain, and ends where both
//! `t_r` and `z_r(N)` lie in the section of the domain at level
//! `min(t_k, z_k(N))` for every quantile coordinate `r`. When `x_k < t_k`
//! every move of the last coordinate must be upward and stay below
//! `-B(z, t)`.

use serde::Serialize;

use super::{Domain, Membership, STRICT_EPS};
use crate::error::{check_dim, Error, Result};
use crate::functionals::FunctionalSpec;
use crate::scores::b_bound;

/// Sweep cap for [`construct_path`].
pub const MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSequence {
    points: Vec<Vec<f64>>,
}

impl PathSequence {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("path", "at least one point is required"));
        }
        let k = points[0].len();
        for p in &points {
            check_dim(k, p.len())?;
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StallReason {
    /// A full sweep moved nothing.
    Stalled,
    /// [`MAX_SWEEPS`] sweeps ran without reaching the section condition.
    SweepLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureTrace {
    pub reason: StallReason,
    /// 1-based coordinate that blocks progress.
    pub blocking_coordinate: usize,
    /// Quantile coordinates (1-based) whose section condition fails at the last point.
    pub failing_sections: Vec<usize>,
    /// Domain constraints active at the last point.
    pub active_constraints: Vec<String>,
    /// Whether the `-B(z, t)` cap stops the last coordinate from rising.
    pub b_cap_active: bool,
    pub neg_b: f64,
    pub partial: PathSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PathOutcome {
    Found { path: PathSequence },
    Blocked { trace: FailureTrace },
}

impl PathOutcome {
    pub fn path(&self) -> Option<&PathSequence> {
        match self {
            PathOutcome::Found { path } => Some(path),
            PathOutcome::Blocked { .. } => None,
        }
    }

    pub fn is_found(&self) -> bool {
        self.path().is_some()
    }
}

/// Quantile coordinates (0-based) for which `t_r` or `z_r` falls outside
/// the section at level `min(t_k, z_k)`.
fn section_failures(domain: &Domain, z: &[f64], t: &[f64]) -> Result<Vec<usize>> {
    let k = domain.k();
    let w = t[k - 1].min(z[k - 1]);
    let mut bad = Vec::new();
    for r in 0..k - 1 {
        let ok = match domain.section_interval(r, w)? {
            Some(iv) => iv.contains(t[r]) && iv.contains(z[r]),
            None => false,
        };
        if !ok {
            bad.push(r);
        }
    }
    Ok(bad)
}

/// Farthest admissible value for `z[coord]` on the way to `target`,
/// optionally capped from above. `None` when no progress is possible.
fn step_toward(domain: &Domain, z: &[f64], coord: usize, target: f64, cap: Option<f64>) -> Result<Option<f64>> {
    let cur = z[coord];
    if cur == target {
        return Ok(None);
    }
    let Some(iv) = domain.line_interval(z, coord)? else {
        return Ok(None);
    };
    let up = target > cur;
    let mut goal = if up {
        let mut g = target;
        if let Some(c) = cap {
            g = g.min(c);
        }
        if g <= cur {
            return Ok(None);
        }
        if g > iv.hi || (g == iv.hi && iv.hi_open) {
            g = if iv.hi_open { back_off(iv.hi, cur) } else { iv.hi };
        }
        g
    } else {
        let mut g = target;
        if g < iv.lo || (g == iv.lo && iv.lo_open) {
            g = if iv.lo_open { back_off(iv.lo, cur) } else { iv.lo };
        }
        g
    };
    let mut probe = z.to_vec();
    for _ in 0..8 {
        let moved = if up { goal > cur } else { goal < cur };
        if !moved || (goal - cur).abs() <= 1e-12 * cur.abs().max(1.0) {
            return Ok(None);
        }
        probe[coord] = goal;
        if domain.contains(&probe, Membership::Declared)? {
            return Ok(Some(goal));
        }
        goal = cur + 0.5 * (goal - cur);
    }
    Ok(None)
}

/// A point strictly between `cur` and the open edge.
fn back_off(edge: f64, cur: f64) -> f64 {
    let gap = edge - cur;
    let delta = (STRICT_EPS * edge.abs().max(1.0)).min(0.5 * gap.abs());
    edge - delta * gap.signum()
}

fn check_preconditions(domain: &Domain, spec: &FunctionalSpec, x: &[f64], t: &[f64]) -> Result<()> {
    check_dim(domain.k(), spec.k())?;
    check_dim(domain.k(), x.len())?;
    check_dim(domain.k(), t.len())?;
    if !domain.contains(x, Membership::Declared)? {
        return Err(Error::Precondition(format!("x = {x:?} is not in the domain")));
    }
    if !domain.contains(t, Membership::Declared)? {
        return Err(Error::Precondition(format!("t = {t:?} is not in the domain")));
    }
    if !Domain::a0(spec).contains(t, Membership::Declared)? {
        return Err(Error::Precondition(format!("t = {t:?} is not a possible functional value")));
    }
    Ok(())
}

/// Greedy certificate search: alternately move each quantile coordinate
/// toward `t` as far as the domain allows, then the last coordinate
/// (capped by `-B(z, t)` when it has to rise). Stops as soon as the section
/// condition holds, or reports where it got stuck.
pub fn construct_path(domain: &Domain, spec: &FunctionalSpec, x: &[f64], t: &[f64]) -> Result<PathOutcome> {
    check_preconditions(domain, spec, x, t)?;
    let k = domain.k();
    let rising = x[k - 1] < t[k - 1];
    let mut z = x.to_vec();
    let mut points = vec![z.clone()];
    if section_failures(domain, &z, t)?.is_empty() {
        return Ok(PathOutcome::Found {
            path: PathSequence { points },
        });
    }

    let mut reason = StallReason::SweepLimit;
    'sweeps: for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        for coord in 0..k {
            let cap = if coord == k - 1 && rising {
                Some(-b_bound(spec, &z, t)?)
            } else {
                None
            };
            if let Some(v) = step_toward(domain, &z, coord, t[coord], cap)? {
                z[coord] = v;
                points.push(z.clone());
                moved = true;
                if section_failures(domain, &z, t)?.is_empty() {
                    return Ok(PathOutcome::Found {
                        path: PathSequence { points },
                    });
                }
            }
        }
        if !moved {
            reason = StallReason::Stalled;
            break 'sweeps;
        }
    }

    let failing = section_failures(domain, &z, t)?;
    let neg_b = -b_bound(spec, &z, t)?;
    let b_cap_active = rising && z[k - 1] < t[k - 1] && z[k - 1] >= neg_b;
    let blocking = if b_cap_active {
        k
    } else {
        failing.first().map(|r| r + 1).unwrap_or(k)
    };
    let active_constraints = domain
        .active_constraints(&z, 1e-9)
        .into_iter()
        .map(|i| domain.constraints()[i].to_string())
        .collect();
    Ok(PathOutcome::Blocked {
        trace: FailureTrace {
            reason,
            blocking_coordinate: blocking,
            failing_sections: failing.into_iter().map(|r| r + 1).collect(),
            active_constraints,
            b_cap_active,
            neg_b,
            partial: PathSequence { points },
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub passed: bool,
    pub detail: Option<String>,
}

impl ConditionCheck {
    fn pass() -> Self {
        Self {
            passed: true,
            detail: None,
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self {
            passed: false,
            detail: Some(detail.into()),
        }
    }
}

/// Per-condition outcome of [`verify_path`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathCheck {
    /// The path starts at `x`.
    pub starts_at_x: ConditionCheck,
    /// Section condition at the final point.
    pub sections: ConditionCheck,
    /// Each step moves its coordinate monotonically toward `t`.
    pub monotone: ConditionCheck,
    /// Each step changes at most one coordinate.
    pub single_coordinate: ConditionCheck,
    /// Rising last-coordinate moves stay below `-B(z, t)`.
    pub b_cap: ConditionCheck,
    /// `B` is unchanged across last-coordinate moves.
    pub b_equality: ConditionCheck,
    /// Every point lies in the domain.
    pub membership: ConditionCheck,
}

impl PathCheck {
    pub fn passed(&self) -> bool {
        [
            &self.starts_at_x,
            &self.sections,
            &self.monotone,
            &self.single_coordinate,
            &self.b_cap,
            &self.b_equality,
            &self.membership,
        ]
        .iter()
        .all(|c| c.passed)
    }
}

/// Checks every certificate condition independently of how the path was built.
pub fn verify_path(domain: &Domain, spec: &FunctionalSpec, seq: &PathSequence, x: &[f64], t: &[f64]) -> Result<PathCheck> {
    let k = domain.k();
    check_dim(k, spec.k())?;
    check_dim(k, x.len())?;
    check_dim(k, t.len())?;
    check_dim(k, seq.points[0].len())?;
    let pts = &seq.points;

    let starts_at_x = if pts[0].as_slice() == x {
        ConditionCheck::pass()
    } else {
        ConditionCheck::fail(format!("first point {:?} differs from x", pts[0]))
    };

    let failing = section_failures(domain, seq.last(), t)?;
    let sections = if failing.is_empty() {
        ConditionCheck::pass()
    } else {
        ConditionCheck::fail(format!("section condition fails for coordinates {:?}", failing.iter().map(|r| r + 1).collect::<Vec<_>>()))
    };

    let mut monotone = ConditionCheck::pass();
    let mut single = ConditionCheck::pass();
    let mut b_cap = ConditionCheck::pass();
    let mut b_equality = ConditionCheck::pass();
    let rising = x[k - 1] < t[k - 1];
    for (n, w) in pts.windows(2).enumerate() {
        let (prev, next) = (&w[0], &w[1]);
        let changed: Vec<usize> = (0..k).filter(|&m| prev[m] != next[m]).collect();
        if changed.len() > 1 && single.passed {
            single = ConditionCheck::fail(format!("step {} changes coordinates {:?}", n + 1, changed.iter().map(|m| m + 1).collect::<Vec<_>>()));
        }
        for &r in &changed {
            let toward = (t[r] <= next[r] && next[r] <= prev[r]) || (prev[r] <= next[r] && next[r] <= t[r]);
            if !toward && monotone.passed {
                monotone = ConditionCheck::fail(format!("step {} moves coordinate {} away from or past t", n + 1, r + 1));
            }
        }
        if rising && changed.contains(&(k - 1)) {
            let b_prev = b_bound(spec, prev, t)?;
            let b_next = b_bound(spec, next, t)?;
            if !(prev[k - 1] < next[k - 1] && next[k - 1] <= -b_next) && b_cap.passed {
                b_cap = ConditionCheck::fail(format!(
                    "step {}: last coordinate {} -> {} with -B = {}",
                    n + 1,
                    prev[k - 1],
                    next[k - 1],
                    -b_next
                ));
            }
            if b_prev != b_next && b_equality.passed {
                b_equality = ConditionCheck::fail(format!("step {}: B changes from {b_prev} to {b_next}", n + 1));
            }
        }
    }

    let mut membership = ConditionCheck::pass();
    for (n, p) in pts.iter().enumerate() {
        if !domain.contains(p, Membership::Declared)? {
            membership = ConditionCheck::fail(format!("point {n} = {p:?} is outside the domain"));
            break;
        }
    }

    Ok(PathCheck {
        starts_at_x,
        sections,
        monotone,
        single_coordinate: single,
        b_cap,
        b_equality,
        membership,
    })
}
