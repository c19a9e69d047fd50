//! Convex polyhedral action domains.

mod certify;
mod path;
mod section;

use std::fmt;

use serde::Serialize;

use crate::config::{parse_call, parse_f64, split_top_level};
use crate::error::{check_dim, Error, Result};
use crate::functionals::FunctionalSpec;

pub use certify::{certify_domain, expected_w_verdict, w_sweep, CertReport, SamplerConfig, Verdict, WSweepRow, Witness, WitnessOutcome};
pub use path::{
    construct_path, verify_path, ConditionCheck, FailureTrace, PathCheck, PathOutcome, PathSequence, StallReason,
    MAX_SWEEPS,
};
pub use section::SectionInterval;

/// Tolerance used when strict constraints are relaxed inside linear programs.
pub const STRICT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
}

/// `normal . x <= bound` or `normal . x < bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub normal: Vec<f64>,
    pub bound: f64,
    pub relation: Relation,
}

impl Constraint {
    pub fn le(normal: Vec<f64>, bound: f64) -> Self {
        Self {
            normal,
            bound,
            relation: Relation::Le,
        }
    }

    pub fn lt(normal: Vec<f64>, bound: f64) -> Self {
        Self {
            normal,
            bound,
            relation: Relation::Lt,
        }
    }

    pub fn is_strict(&self) -> bool {
        self.relation == Relation::Lt
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.normal.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    pub fn satisfied(&self, x: &[f64], mode: Membership) -> bool {
        let lhs = self.lhs(x);
        match (self.relation, mode) {
            (Relation::Le, Membership::Declared) => lhs <= self.bound,
            _ => lhs < self.bound,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.normal.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{a}")?;
        }
        let rel = match self.relation {
            Relation::Le => "<=",
            Relation::Lt => "<",
        };
        write!(f, " {rel} {}", self.bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// Strict and non-strict relations as declared.
    Declared,
    /// Every relation treated as strict.
    Interior,
}

/// Intersection of finitely many half-spaces in `R^k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Domain {
    k: usize,
    constraints: Vec<Constraint>,
    label: Option<String>,
}

impl Domain {
    pub fn new(k: usize, constraints: Vec<Constraint>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("domain", "dimension must be at least 2"));
        }
        for c in &constraints {
            check_dim(k, c.normal.len())?;
            if c.normal.iter().chain([&c.bound]).any(|v| !v.is_finite()) {
                return Err(Error::invalid("domain", format!("non-finite constraint `{c}`")));
            }
        }
        Ok(Self {
            k,
            constraints,
            label: None,
        })
    }

    fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn full(k: usize) -> Result<Self> {
        Ok(Self::new(k, Vec::new())?.labelled(format!("full({k})")))
    }

    /// `x_1 <= ... <= x_{k-1}` and `x_k <= sum_m p_m x_m`.
    pub fn a0(spec: &FunctionalSpec) -> Self {
        let k = spec.k();
        let mut cs = Vec::with_capacity(k - 1);
        for r in 0..k.saturating_sub(2) {
            let mut a = vec![0.0; k];
            a[r] = 1.0;
            a[r + 1] = -1.0;
            cs.push(Constraint::le(a, 0.0));
        }
        let mut a: Vec<f64> = spec.weights().iter().map(|p| -p).collect();
        a.push(1.0);
        cs.push(Constraint::le(a, 0.0));
        Self::new(k, cs).expect("valid by construction").labelled("A0")
    }

    pub fn a0_plus(spec: &FunctionalSpec) -> Self {
        let k = spec.k();
        let orthant = (0..k).map(|i| Constraint::le(unit(k, i, -1.0), 0.0)).collect();
        Self::a0(spec)
            .intersect(&Self::new(k, orthant).expect("valid"))
            .expect("same dimension")
            .labelled("A0_plus")
    }

    pub fn a0_minus(spec: &FunctionalSpec) -> Self {
        let k = spec.k();
        let orthant = (0..k).map(|i| Constraint::le(unit(k, i, 1.0), 0.0)).collect();
        Self::a0(spec)
            .intersect(&Self::new(k, orthant).expect("valid"))
            .expect("same dimension")
            .labelled("A0_minus")
    }

    /// `x_k < 0`, other coordinates free.
    pub fn half_strip(k: usize) -> Result<Self> {
        Ok(Self::new(k, vec![Constraint::lt(unit(k, k - 1, 1.0), 0.0)])?.labelled("half_strip"))
    }

    /// `x_2 <= x_1 <= x_2 + c`.
    pub fn band(c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::invalid("band", "width must be non-negative"));
        }
        let cs = vec![Constraint::le(vec![-1.0, 1.0], 0.0), Constraint::le(vec![1.0, -1.0], c)];
        Ok(Self::new(2, cs)?.labelled(format!("band({c})")))
    }

    /// `x_1 >= 0` and `|x_2| <= x_1`.
    pub fn cone_counterexample() -> Self {
        let cs = vec![
            Constraint::le(vec![-1.0, 0.0], 0.0),
            Constraint::le(vec![-1.0, 1.0], 0.0),
            Constraint::le(vec![-1.0, -1.0], 0.0),
        ];
        Self::new(2, cs).expect("valid").labelled("cone_counterexample")
    }

    /// `x_2 > w x_1`.
    pub fn w_cone(w: f64) -> Result<Self> {
        Ok(Self::new(2, vec![Constraint::lt(vec![w, -1.0], 0.0)])?.labelled(format!("w_cone({w})")))
    }

    pub fn intersect(&self, other: &Domain) -> Result<Self> {
        check_dim(self.k, other.k)?;
        let mut cs = self.constraints.clone();
        cs.extend(other.constraints.iter().cloned());
        let mut d = Self::new(self.k, cs)?;
        d.label = Some(format!("{} & {}", self.name(), other.name()));
        Ok(d)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// The preset label, or the raw constraint list.
    pub fn name(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => self.raw_text(),
        }
    }

    fn raw_text(&self) -> String {
        let body: Vec<String> = self.constraints.iter().map(|c| c.to_string()).collect();
        format!("constraints({})", body.join(", "))
    }

    pub fn contains(&self, x: &[f64], mode: Membership) -> Result<bool> {
        check_dim(self.k, x.len())?;
        Ok(x.iter().all(|v| v.is_finite()) && self.constraints.iter().all(|c| c.satisfied(x, mode)))
    }

    /// Indices of constraints with `|a . x - b| <= tol * max(1, |b|)`.
    pub fn active_constraints(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| (c.lhs(x) - c.bound).abs() <= tol * c.bound.abs().max(1.0))
            .map(|(i, _)| i)
            .collect()
    }

    /// Parses a domain expression: a preset (`full`, `A0`, `A0_plus`,
    /// `A0_minus`, `half_strip`, `band(c)`, `cone_counterexample`,
    /// `w_cone(W)`), an intersection `expr & expr`, or a raw list
    /// `constraints(a1 a2 <= b, a1 a2 < b)`.
    pub fn parse(s: &str, spec: &FunctionalSpec) -> Result<Self> {
        let parts = split_top_level(s, '&');
        if parts.len() > 1 {
            let mut iter = parts.iter();
            let mut acc = Self::parse(iter.next().expect("non-empty"), spec)?;
            for p in iter {
                acc = acc.intersect(&Self::parse(p, spec)?)?;
            }
            return Ok(acc);
        }
        let k = spec.k();
        let (name, args) = parse_call(s)?;
        let num = |i: usize| -> Result<f64> {
            args.get(i)
                .ok_or_else(|| Error::Parse(format!("`{name}` needs an argument")))
                .and_then(|a| parse_f64(a))
        };
        let d = match name.to_ascii_lowercase().as_str() {
            "full" => Self::full(if args.is_empty() { k } else { num(0)? as usize })?,
            "a0" => Self::a0(spec),
            "a0_plus" => Self::a0_plus(spec),
            "a0_minus" => Self::a0_minus(spec),
            "half_strip" => Self::half_strip(k)?,
            "band" => Self::band(num(0)?)?,
            "cone_counterexample" => Self::cone_counterexample(),
            "w_cone" => Self::w_cone(num(0)?)?,
            "constraints" => {
                let cs = args.iter().map(|a| parse_constraint(a)).collect::<Result<Vec<_>>>()?;
                let dim = cs.first().map(|c| c.normal.len()).unwrap_or(k);
                Self::new(dim, cs)?
            }
            other => return Err(Error::Parse(format!("unknown domain `{other}`"))),
        };
        Ok(d)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.raw_text())
    }
}

fn unit(k: usize, i: usize, v: f64) -> Vec<f64> {
    let mut a = vec![0.0; k];
    a[i] = v;
    a
}

fn parse_constraint(s: &str) -> Result<Constraint> {
    let (lhs, rhs, relation) = if let Some((l, r)) = s.split_once("<=") {
        (l, r, Relation::Le)
    } else if let Some((l, r)) = s.split_once('<') {
        (l, r, Relation::Lt)
    } else {
        return Err(Error::Parse(format!("constraint `{s}` needs `<=` or `<`")));
    };
    let normal = lhs.split_whitespace().map(parse_f64).collect::<Result<Vec<_>>>()?;
    if normal.is_empty() {
        return Err(Error::Parse(format!("constraint `{s}` has no coefficients")));
    }
    Ok(Constraint {
        normal,
        bound: parse_f64(rhs)?,
        relation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var_es() -> FunctionalSpec {
        FunctionalSpec::var_es(0.05).unwrap()
    }

    #[test]
    fn membership_examples() {
        let a0 = Domain::a0(&var_es());
        assert!(a0.contains(&[1.0, 0.5], Membership::Declared).unwrap());
        assert!(a0.contains(&[1.0, 1.0], Membership::Declared).unwrap());
        assert!(!a0.contains(&[1.0, 1.0], Membership::Interior).unwrap());
        let w = Domain::w_cone(1.0).unwrap();
        assert!(!w.contains(&[1.0, 1.0], Membership::Declared).unwrap());
        let cone = Domain::cone_counterexample();
        assert!(cone.contains(&[2.0, -1.8], Membership::Declared).unwrap());
        assert!(!cone.contains(&[1.0, -1.8], Membership::Declared).unwrap());
        assert!(cone.contains(&[1.0], Membership::Declared).is_err());
    }

    #[test]
    fn a0_for_three_components() {
        let spec = FunctionalSpec::new(vec![0.025, 0.05], vec![0.5, 0.5]).unwrap();
        let a0 = Domain::a0(&spec);
        assert!(a0.contains(&[-2.0, -1.0, -1.6], Membership::Declared).unwrap());
        assert!(!a0.contains(&[-1.0, -2.0, -3.0], Membership::Declared).unwrap());
        assert!(!a0.contains(&[-2.0, -1.0, -1.4], Membership::Declared).unwrap());
    }

    #[test]
    fn parsing_presets_and_raw() {
        let spec = var_es();
        let d = Domain::parse("A0 & half_strip", &spec).unwrap();
        assert_eq!(d.constraints().len(), 2);
        assert_eq!(d.name(), "A0 & half_strip");
        assert!(!d.contains(&[1.0, 0.0], Membership::Declared).unwrap());
        let raw = Domain::parse("constraints(-1 0 <= 0, -1 1 <= 0, -1 -1 <= 0)", &spec).unwrap();
        assert_eq!(raw.constraints(), Domain::cone_counterexample().constraints());
        let back = Domain::parse(&raw.to_string(), &spec).unwrap();
        assert_eq!(back, raw);
        assert_eq!(Domain::parse("w_cone(-19)", &spec).unwrap().constraints()[0].normal, vec![-19.0, -1.0]);
        assert!(Domain::parse("banana", &spec).is_err());
        assert!(Domain::parse("band", &spec).is_err());
        assert!(Domain::parse("constraints(1 2 3)", &spec).is_err());
    }
}
