#![allow(dead_code)]

use elicit_core::{Distribution, FunctionalSpec};
use proptest::prelude::*;

pub fn normalized(raw: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let total: f64 = raw.iter().map(|p| p.1).sum();
    raw.into_iter().map(|(y, w)| (y, w / total)).collect()
}

/// Point masses, normals, discrete laws and normal / point mixtures.
pub fn distribution() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        (-3.0..3.0f64).prop_map(Distribution::point),
        (-3.0..3.0f64, 0.1..3.0f64).prop_map(|(m, s)| Distribution::normal(m, s).unwrap()),
        prop::collection::vec((-5.0..5.0f64, 0.05..1.0f64), 1..6)
            .prop_map(|pts| Distribution::discrete(&normalized(pts)).unwrap()),
        (-3.0..3.0f64, 0.1..2.0f64, -3.0..3.0f64, 0.05..0.95f64).prop_map(|(m, s, c, w)| {
            Distribution::mixture(vec![(w, Distribution::normal(m, s).unwrap()), (1.0 - w, Distribution::point(c))]).unwrap()
        }),
    ]
}

/// `(VaR, ES)` at a random level, or two quantiles plus a spectral ES.
pub fn functional() -> impl Strategy<Value = FunctionalSpec> {
    prop_oneof![
        (0.01..0.5f64).prop_map(|a| FunctionalSpec::var_es(a).unwrap()),
        (0.01..0.3f64, 0.05..0.5f64, 0.05..0.95f64)
            .prop_map(|(q1, gap, p)| FunctionalSpec::new(vec![q1, q1 + gap], vec![p, 1.0 - p]).unwrap()),
    ]
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
