//! Property tests for the numerical invariants of the score family.

mod common;

use common::{close, distribution, functional};
use elicit_core::config::KvConfig;
use elicit_core::domains::SectionInterval;
use elicit_core::distributions::Side;
use elicit_core::scores::{phi_score_diff, AffineShift, QuadraticPotential};
use elicit_core::{b_bound, c_bound, score_diff_decomposition, vbar, Distribution, Domain, FunctionalSpec, ScoreFn, ScoreSpec};
use proptest::prelude::*;

fn point(k: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, k)
}

fn cone_like(f: &FunctionalSpec) -> ScoreSpec {
    let terms = f.levels().iter().map(|q| ScoreFn::Exp { scale: 1.0 / q, rate: -1.0 }).collect();
    ScoreSpec::new(f.clone(), terms, ScoreFn::exp(), ScoreFn::Zero).unwrap()
}

// =============================================================================
// BOUNDS
// =============================================================================

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// -t_k <= C(z, F) <= B(z, T(F)), with equality on both sides at z = T(F).
    #[test]
    fn sandwich(f in functional(), d in distribution(), raw in point(3, -5.0, 5.0)) {
        let k = f.k();
        let z = &raw[..k];
        let t = f.evaluate(&d).unwrap();
        let c = c_bound(&f, z, &d).unwrap();
        let b = b_bound(&f, z, &t).unwrap();
        prop_assert!(-t[k - 1] <= c + 1e-9, "-t_k = {} > C = {c}", -t[k - 1]);
        prop_assert!(c <= b + 1e-9, "C = {c} > B = {b}");
        prop_assert!((c_bound(&f, &t, &d).unwrap() + t[k - 1]).abs() <= 1e-9);
        prop_assert!((b_bound(&f, &t, &t).unwrap() + t[k - 1]).abs() <= 1e-12);
    }

    /// Neither bound looks at the last coordinate.
    #[test]
    fn bounds_ignore_last_coordinate(f in functional(), d in distribution(), raw in point(3, -5.0, 5.0), shift in -10.0..10.0f64) {
        let k = f.k();
        let z = raw[..k].to_vec();
        let mut moved = z.clone();
        moved[k - 1] += shift;
        let t = f.evaluate(&d).unwrap();
        prop_assert_eq!(b_bound(&f, &z, &t).unwrap(), b_bound(&f, &moved, &t).unwrap());
        prop_assert_eq!(c_bound(&f, &z, &d).unwrap(), c_bound(&f, &moved, &d).unwrap());
    }

    /// r1 + r2 equals the expected difference of pointwise scores.
    #[test]
    fn decomposition_matches_direct_difference(
        f in functional(),
        d in distribution(),
        a in point(3, -2.0, 2.0),
        b in point(3, -2.0, 2.0),
        w in -2.0..2.0f64,
    ) {
        let k = f.k();
        let (zp, z) = (&a[..k], &b[..k]);
        let score = cone_like(&f);
        let dec = score_diff_decomposition(&score, zp, z, w, &d, 1e-12).unwrap();
        let jumps: Vec<f64> = zp.iter().chain(z).copied().collect();
        let direct = d
            .try_expect(|y| Ok(score.eval(zp, y)? - score.eval(z, y)?), &jumps, 1e-12)
            .unwrap();
        prop_assert!(close(dec.total(), direct, 1e-5), "r1 + r2 = {} vs {direct}", dec.total());
    }
}

// =============================================================================
// DISTRIBUTIONS
// =============================================================================

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// The lower quantile satisfies F(x-) <= q <= F(x).
    #[test]
    fn quantile_inverts_cdf(d in distribution(), q in 0.001..0.999f64) {
        let x = d.quantile(q).unwrap();
        prop_assert!(d.cdf_eval(x, Side::Right) >= q - 1e-12);
        prop_assert!(d.cdf_eval(x, Side::Left) <= q + 1e-12);
    }

    /// LPM is convex and agrees with direct integration of (z - Y)^+.
    #[test]
    fn lpm_convex_and_matches_quadrature(d in distribution(), a in -6.0..6.0f64, b in -6.0..6.0f64) {
        let mid = 0.5 * (a + b);
        prop_assert!(d.lpm(mid) <= 0.5 * (d.lpm(a) + d.lpm(b)) + 1e-12);
        let direct = d.expect(|y| (a - y).max(0.0), &[a], 1e-12).unwrap();
        prop_assert!((d.lpm(a) - direct).abs() <= 1e-9 * d.lpm(a).max(1.0));
    }

    /// CDF, LPM and expectations are linear in the mixture weights.
    #[test]
    fn mixture_linearity(a in distribution(), b in distribution(), w in 0.0..1.0f64, y in -5.0..5.0f64) {
        let m = Distribution::mixture(vec![(w, a.clone()), (1.0 - w, b.clone())]).unwrap();
        prop_assert!((m.cdf(y) - (w * a.cdf(y) + (1.0 - w) * b.cdf(y))).abs() < 1e-12);
        prop_assert!((m.lpm(y) - (w * a.lpm(y) + (1.0 - w) * b.lpm(y))).abs() < 1e-12);
        let f = |v: f64| (0.3 * v).sin() + v;
        let got = m.expect(f, &[], 1e-12).unwrap();
        let want = w * a.expect(f, &[], 1e-12).unwrap() + (1.0 - w) * b.expect(f, &[], 1e-12).unwrap();
        prop_assert!((got - want).abs() < 1e-9);
    }

    /// The ES identification entry vanishes at T(F) for every law; the
    /// quantile entries do so whenever F is continuous.
    #[test]
    fn identification_mean_zero(f in functional(), d in distribution()) {
        let k = f.k();
        let t = f.evaluate(&d).unwrap();
        let v = vbar(&f, &t, &d).unwrap();
        prop_assert!(v[k - 1].abs() < 1e-9, "{v:?}");
        if d.is_continuous() {
            prop_assert!(v[..k - 1].iter().all(|c| c.abs() < 1e-9), "{v:?}");
        }
    }
}

// =============================================================================
// POTENTIAL CONSTRUCTION
// =============================================================================

proptest! {
    /// Adding an affine function to the potential leaves differences unchanged.
    #[test]
    fn phi_affine_shift_invariance(
        coeffs in point(3, 0.1, 3.0),
        beta in point(3, -5.0, 5.0),
        alpha in -5.0..5.0f64,
        x in point(3, -3.0, 3.0),
        z in point(3, -3.0, 3.0),
        y in -3.0..3.0f64,
    ) {
        let phi = QuadraticPotential { coeffs };
        let shifted = AffineShift { inner: phi.clone(), beta, alpha };
        let (q, p) = (ScoreFn::constant(1.0), vec![ScoreFn::identity(); 3]);
        let base = phi_score_diff(&phi, &q, &p, &x, &z, y).unwrap();
        let moved = phi_score_diff(&shifted, &q, &p, &x, &z, y).unwrap();
        prop_assert!((base - moved).abs() <= 1e-10, "{base} vs {moved}");
    }

    /// With phi = |x|^2, q = 1 and p_m(y) = y the difference is the
    /// squared-error difference.
    #[test]
    fn quadratic_phi_is_squared_error(x in point(2, -4.0, 4.0), z in point(2, -4.0, 4.0), y in -4.0..4.0f64) {
        let phi = QuadraticPotential::unit(2);
        let got = phi_score_diff(&phi, &ScoreFn::constant(1.0), &[ScoreFn::identity(), ScoreFn::identity()], &x, &z, y).unwrap();
        let se = |v: &[f64]| v.iter().map(|c| (c - y).powi(2)).sum::<f64>();
        prop_assert!((got - (se(&x) - se(&z))).abs() <= 1e-12 * se(&x).max(se(&z)).max(1.0));
    }
}

// =============================================================================
// DOMAINS
// =============================================================================

fn contains_interval(outer: &SectionInterval, inner: &SectionInterval) -> bool {
    outer.lo <= inner.lo && inner.hi <= outer.hi
}

proptest! {
    /// Sections of a smaller domain sit inside sections of a larger one.
    #[test]
    fn section_monotone_under_inclusion(c1 in 0.0..3.0f64, extra in 0.0..3.0f64, w in -5.0..5.0f64) {
        let small = Domain::band(c1).unwrap().section_interval(0, w).unwrap().unwrap();
        let big = Domain::band(c1 + extra).unwrap().section_interval(0, w).unwrap().unwrap();
        prop_assert!(contains_interval(&big, &small), "{small:?} not in {big:?}");
    }

    #[test]
    fn section_monotone_under_intersection(p in 0.05..0.95f64, w in -5.0..5.0f64, r in 0usize..2) {
        let f = FunctionalSpec::new(vec![0.025, 0.05], vec![p, 1.0 - p]).unwrap();
        let big = Domain::a0(&f);
        let small = big.intersect(&Domain::a0_minus(&f)).unwrap();
        match (small.section_interval(r, w).unwrap(), big.section_interval(r, w).unwrap()) {
            (Some(s), Some(b)) => prop_assert!(contains_interval(&b, &s), "{s:?} not in {b:?}"),
            (Some(s), None) => prop_assert!(false, "{s:?} has no enclosing section"),
            _ => {}
        }
    }
}

// =============================================================================
// CONFIG
// =============================================================================

proptest! {
    /// parse(to_text(cfg)) == cfg.
    #[test]
    fn kv_config_round_trip(entries in prop::collection::btree_map("[a-z][a-z0-9_.]{0,12}", "[A-Za-z0-9_.,;:()*@ -]{0,24}", 0..12)) {
        let mut cfg = KvConfig::new();
        for (k, v) in &entries {
            cfg.set(k.clone(), v.trim().to_string());
        }
        let text = cfg.to_text();
        let back = KvConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_text(), text);
    }

    /// Distributions print in the syntax they are parsed from. Discrete
    /// weights are renormalised on parsing, so they may move by an ulp.
    #[test]
    fn distribution_text_round_trip(d in distribution()) {
        let back: Distribution = d.to_string().parse().unwrap();
        prop_assert_eq!(back.is_continuous(), d.is_continuous());
        for i in -60..=60 {
            let y = i as f64 / 10.0;
            prop_assert!((back.cdf(y) - d.cdf(y)).abs() <= 1e-15, "cdf({y})");
            prop_assert!((back.lpm(y) - d.lpm(y)).abs() <= 1e-14, "lpm({y})");
        }
    }
}
