//! Consistency search and the cone counterexample.

use elicit_core::consistency::{ConsistencyVerdict, SearchConfig, COUNTEREXAMPLE_PROBE};
use elicit_core::{check_consistency, figure1_grid, reproduce_counterexample, Distribution, Domain, ScoreSpec};

fn family() -> Vec<Distribution> {
    vec![
        Distribution::standard_normal(),
        Distribution::normal(0.5, 2.0).unwrap(),
        Distribution::mixture(vec![
            (0.5, Distribution::normal(-1.0, 1.0).unwrap()),
            (0.5, Distribution::normal(1.0, 0.5).unwrap()),
        ])
        .unwrap(),
    ]
}

#[test]
fn fz0_consistent_on_negative_a0() {
    let score = ScoreSpec::fz0(0.05).unwrap();
    let domain = Domain::a0(score.functional()).intersect(&Domain::half_strip(2).unwrap()).unwrap();
    let rep = check_consistency(&score, &domain, &family(), &SearchConfig::default()).unwrap();
    assert_eq!(rep.verdict, ConsistencyVerdict::Consistent, "{rep:?}");
    for r in &rep.records {
        assert!(r.location_error < 1e-3, "{}: {}", r.distribution, r.location_error);
        assert!(r.gap <= 1e-7);
    }
    assert!(rep.strictness.as_ref().is_some_and(|s| s.strict));
}

#[test]
fn cone_score_inconsistent_with_probe_witness() {
    let score = ScoreSpec::counterexample_cone(0.05).unwrap();
    let cfg = SearchConfig {
        probes: vec![COUNTEREXAMPLE_PROBE.to_vec()],
        ..SearchConfig::default()
    };
    let d = Distribution::normal(0.2, 0.1).unwrap();
    let rep = check_consistency(&score, &Domain::cone_counterexample(), &[d], &cfg).unwrap();
    assert_eq!(rep.verdict, ConsistencyVerdict::Inconsistent);
    let w = rep.witnesses().next().unwrap();
    assert_eq!(w.x, COUNTEREXAMPLE_PROBE.to_vec());
    assert!(w.score < w.score_at_t);
    assert!(rep.strictness.is_none());
}

#[test]
fn counterexample_point_mass_values() {
    let table = reproduce_counterexample(0.05).unwrap();
    assert_eq!(table.score_origin_point_mass, -2.0);
    // quantile part 0.95 * 20 e^-2 - 20, last part e^-1.8 (-1.8 + 20 * 1.9) - e^-1.8
    let hand = 19.0 * (-2.0f64).exp() - 20.0 + 35.2 * (-1.8f64).exp();
    assert!((table.score_probe_point_mass - hand).abs() < 1e-12, "{} vs {hand}", table.score_probe_point_mass);
    assert!(table.point_mass_inconsistent());
    assert!(table.normal_inconsistent());
}

#[test]
fn skipped_when_t_outside_domain() {
    let score = ScoreSpec::fz0(0.05).unwrap();
    let domain = Domain::a0(score.functional()).intersect(&Domain::half_strip(2).unwrap()).unwrap();
    let high = Distribution::normal(10.0, 0.1).unwrap();
    let rep = check_consistency(&score, &domain, &[high], &SearchConfig::default()).unwrap();
    assert_eq!(rep.records[0].verdict, ConsistencyVerdict::Skipped);
}

#[test]
fn figure_curves_are_sandwiched() {
    let score = ScoreSpec::fz0(0.05).unwrap();
    let fig = figure1_grid(&score, &Distribution::standard_normal(), (-4.0, 1.0), (-4.0, -0.5), 31).unwrap();
    assert!(fig.curves.iter().all(|r| r.neg_b <= r.neg_c + 1e-12));
    assert!((fig.meeting_value - fig.t[1]).abs() < 1e-12);
    assert_eq!(fig.curves_csv().lines().next(), Some("z1,neg_C,neg_B"));
    // t1 is added to the 31 abscissae
    assert_eq!(fig.grid_csv().lines().count(), 1 + 32 * 31);
}
