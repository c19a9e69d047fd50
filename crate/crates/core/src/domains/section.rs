use serde::Serialize;

use super::{Domain, STRICT_EPS};
use crate::error::{check_dim, Error, Result};
use crate::lp::{maximize, minimize, LpOutcome, Row};

/// A (possibly unbounded) interval with endpoint openness flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl SectionInterval {
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_open { v > self.lo } else { v >= self.lo };
        let below = if self.hi_open { v < self.hi } else { v <= self.hi };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }
}

impl Domain {
    /// Values `v` such that replacing `point[coord]` by `v` stays in the
    /// domain (constraints as declared). `None` when no value works.
    pub fn line_interval(&self, point: &[f64], coord: usize) -> Result<Option<SectionInterval>> {
        check_dim(self.k, point.len())?;
        let mut iv = SectionInterval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            lo_open: true,
            hi_open: true,
        };
        for c in &self.constraints {
            let a = c.normal[coord];
            let rest: f64 = c
                .normal
                .iter()
                .zip(point)
                .enumerate()
                .filter(|(j, _)| *j != coord)
                .map(|(_, (a, v))| a * v)
                .sum();
            let room = c.bound - rest;
            if a == 0.0 {
                let ok = if c.is_strict() { room > 0.0 } else { room >= 0.0 };
                if !ok {
                    return Ok(None);
                }
                continue;
            }
            let edge = room / a;
            if a > 0.0 {
                if edge < iv.hi || (edge == iv.hi && c.is_strict()) {
                    iv.hi = edge;
                    iv.hi_open = c.is_strict();
                }
            } else if edge > iv.lo || (edge == iv.lo && c.is_strict()) {
                iv.lo = edge;
                iv.lo_open = c.is_strict();
            }
        }
        Ok(if iv.is_empty() { None } else { Some(iv) })
    }

    /// Projection onto coordinate `r` of the slice `{z in A : z_k = w}`.
    pub fn section_interval(&self, r: usize, w: f64) -> Result<Option<SectionInterval>> {
        let k = self.k;
        if r + 1 >= k {
            return Err(Error::invalid("section index", format!("{r} must be below k - 1 = {}", k - 1)));
        }
        if k == 2 {
            return self.line_interval(&[0.0, w], 0);
        }
        if !self.slice_feasible(&[(k - 1, w)])? {
            return Ok(None);
        }
        let base = self.closure_rows(&[(k - 1, w)]);
        let mut objective = vec![0.0; k];
        objective[r] = 1.0;
        let lo = match minimize(&objective, &base) {
            LpOutcome::Optimal { value, .. } => Some(value),
            LpOutcome::Unbounded => None,
            LpOutcome::Infeasible => return Ok(None),
        };
        let hi = match maximize(&objective, &base) {
            LpOutcome::Optimal { value, .. } => Some(value),
            LpOutcome::Unbounded => None,
            LpOutcome::Infeasible => return Ok(None),
        };
        let closed_at = |v: f64| self.slice_feasible(&[(k - 1, w), (r, v)]);
        let iv = SectionInterval {
            lo: lo.unwrap_or(f64::NEG_INFINITY),
            hi: hi.unwrap_or(f64::INFINITY),
            lo_open: match lo {
                Some(v) => !closed_at(v)?,
                None => true,
            },
            hi_open: match hi {
                Some(v) => !closed_at(v)?,
                None => true,
            },
        };
        Ok(if iv.is_empty() { None } else { Some(iv) })
    }

    /// Whether some point of the domain (as declared) has the given
    /// coordinates. Strict rows must hold with slack above [`STRICT_EPS`].
    pub fn slice_feasible(&self, fixed: &[(usize, f64)]) -> Result<bool> {
        let k = self.k;
        for &(i, _) in fixed {
            if i >= k {
                return Err(Error::Dimension { expected: k, got: i + 1 });
            }
        }
        let mut free: Vec<bool> = vec![true; k];
        for &(i, _) in fixed {
            free[i] = false;
        }
        if free.iter().all(|f| !f) {
            let mut x = vec![0.0; k];
            for &(i, v) in fixed {
                x[i] = v;
            }
            return self.contains(&x, super::Membership::Declared);
        }
        // maximise s subject to a.z + s <= b on strict rows, a.z <= b otherwise, s <= 1
        let n = k + 1;
        let mut rows = Vec::with_capacity(self.constraints.len() + fixed.len() + 1);
        for c in &self.constraints {
            let mut a = c.normal.clone();
            a.push(if c.is_strict() { 1.0 } else { 0.0 });
            rows.push(Row::le(a, c.bound));
        }
        for &(i, v) in fixed {
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            rows.push(Row::eq(a, v));
        }
        let mut cap = vec![0.0; n];
        cap[k] = 1.0;
        rows.push(Row::le(cap.clone(), 1.0));
        match maximize(&cap, &rows) {
            LpOutcome::Optimal { value, .. } => {
                let any_strict = self.constraints.iter().any(|c| c.is_strict());
                Ok(!any_strict || value > STRICT_EPS)
            }
            LpOutcome::Unbounded => Ok(true),
            LpOutcome::Infeasible => Ok(false),
        }
    }

    /// Whether the domain has any point at all.
    pub fn is_empty(&self) -> Result<bool> {
        Ok(!self.slice_feasible(&[])?)
    }

    fn closure_rows(&self, fixed: &[(usize, f64)]) -> Vec<Row> {
        let mut rows: Vec<Row> = self.constraints.iter().map(|c| Row::le(c.normal.clone(), c.bound)).collect();
        for &(i, v) in fixed {
            let mut a = vec![0.0; self.k];
            a[i] = 1.0;
            rows.push(Row::eq(a, v));
        }
        rows
    }
}
