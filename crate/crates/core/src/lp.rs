//! Dense two-phase simplex for the small linear programs that arise when
//! slicing action domains (a handful of variables and constraints).
//!
//! All variables are free; they are split internally as `x = u - v` with
//! `u, v >= 0`. Bland's rule is used throughout, so the method terminates.

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `a . x <= b`
    Le,
    /// `a . x == b`
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

impl Row {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            kind: RowKind::Le,
            rhs,
        }
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            kind: RowKind::Eq,
            rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
    Infeasible,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost . y` over the current feasible basis.
    /// Returns `false` when the objective is unbounded below.
    fn minimise(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        for _ in 0..MAX_PIVOTS {
            let mut entering = None;
            for j in 0..self.width {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| cost[b] * self.rows[i][j])
                        .sum::<f64>();
                if reduced < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-15 || (ratio <= lr + 1e-15 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        // Bland's rule cannot cycle; hitting the cap means numerical trouble.
        true
    }
}

/// Maximises `objective . x` subject to `rows`, with `x` free.
pub fn maximize(objective: &[f64], rows: &[Row]) -> LpOutcome {
    let n = objective.len();
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.kind == RowKind::Le).count();

    // Column layout: u (n) | v (n) | slacks | artificials | rhs
    let mut needs_art = Vec::with_capacity(m);
    let mut table = Vec::with_capacity(m);
    let mut slack_col = 2 * n;
    let mut slack_of_row = vec![None; m];
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.coeffs.len(), n, "row width must match objective");
        let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        let mut line = vec![0.0; 2 * n + n_slack];
        for j in 0..n {
            line[j] = sign * row.coeffs[j];
            line[n + j] = -sign * row.coeffs[j];
        }
        if row.kind == RowKind::Le {
            line[slack_col] = sign;
            slack_of_row[i] = Some(slack_col);
            slack_col += 1;
        }
        needs_art.push(!(row.kind == RowKind::Le && sign > 0.0));
        table.push((line, sign * row.rhs));
    }
    let n_art = needs_art.iter().filter(|&&a| a).count();
    let width = 2 * n + n_slack + n_art;
    let mut basis = vec![0; m];
    let mut rows_out = Vec::with_capacity(m);
    let mut art_col = 2 * n + n_slack;
    for (i, (mut line, rhs)) in table.into_iter().enumerate() {
        line.resize(width + 1, 0.0);
        if needs_art[i] {
            line[art_col] = 1.0;
            basis[i] = art_col;
            art_col += 1;
        } else {
            basis[i] = slack_of_row[i].expect("slack present");
        }
        line[width] = rhs;
        rows_out.push(line);
    }
    let mut tab = Tableau {
        rows: rows_out,
        basis,
        width,
    };
    let first_art = 2 * n + n_slack;

    if n_art > 0 {
        let mut cost = vec![0.0; width];
        for c in cost.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        let allowed = vec![true; width];
        tab.minimise(&cost, &allowed);
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= first_art)
            .map(|i| tab.rhs(i))
            .sum();
        if infeas > FEAS_TOL {
            return LpOutcome::Infeasible;
        }
        // Drive remaining zero-level artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] >= first_art {
                if let Some(c) = (0..first_art).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL) {
                    tab.pivot(i, c);
                }
            }
        }
    }

    let mut cost = vec![0.0; width];
    for j in 0..n {
        cost[j] = -objective[j];
        cost[n + j] = objective[j];
    }
    let allowed: Vec<bool> = (0..width).map(|j| j < first_art).collect();
    if !tab.minimise(&cost, &allowed) {
        return LpOutcome::Unbounded;
    }

    let mut y = vec![0.0; width];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(i);
    }
    let x: Vec<f64> = (0..n).map(|j| y[j] - y[n + j]).collect();
    let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpOutcome::Optimal { x, value }
}

/// Minimises `objective . x`; the reported value is the minimum.
pub fn minimize(objective: &[f64], rows: &[Row]) -> LpOutcome {
    let neg: Vec<f64> = objective.iter().map(|c| -c).collect();
    match maximize(&neg, rows) {
        LpOutcome::Optimal { x, value } => LpOutcome::Optimal { x, value: -value },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> 36 at (2, 6)
        let rows = vec![
            Row::le(vec![1.0, 0.0], 4.0),
            Row::le(vec![0.0, 2.0], 12.0),
            Row::le(vec![3.0, 2.0], 18.0),
        ];
        match maximize(&[3.0, 5.0], &rows) {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 36.0).abs() < 1e-9);
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_variables_go_negative() {
        // min x s.t. x >= -3  (i.e. -x <= 3)
        let rows = vec![Row::le(vec![-1.0], 3.0)];
        assert!((minimize(&[1.0], &rows).value().unwrap() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_and_infeasible() {
        let rows = vec![Row::le(vec![-1.0, 0.0], 0.0)];
        assert_eq!(maximize(&[1.0, 0.0], &rows), LpOutcome::Unbounded);
        let rows = vec![Row::le(vec![1.0], -1.0), Row::le(vec![-1.0], -1.0)];
        assert_eq!(maximize(&[1.0], &rows), LpOutcome::Infeasible);
    }

    #[test]
    fn equality_rows() {
        // min x1 s.t. x2 == -1, |x2| <= x1 (cone slice) -> 1
        let rows = vec![
            Row::eq(vec![0.0, 1.0], -1.0),
            Row::le(vec![-1.0, 0.0], 0.0),
            Row::le(vec![-1.0, 1.0], 0.0),
            Row::le(vec![-1.0, -1.0], 0.0),
        ];
        assert!((minimize(&[1.0, 0.0], &rows).value().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(maximize(&[1.0, 0.0], &rows), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_redundant_equalities() {
        let rows = vec![
            Row::eq(vec![1.0, 1.0], 2.0),
            Row::eq(vec![2.0, 2.0], 4.0),
            Row::le(vec![1.0, 0.0], 1.5),
        ];
        let v = minimize(&[0.0, 1.0], &rows).value().unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }
}
