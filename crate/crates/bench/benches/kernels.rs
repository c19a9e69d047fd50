use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use elicit_core::domains::SamplerConfig;
use elicit_core::{certify_domain, construct_path, Distribution, Domain, FunctionalSpec, ScoreSpec};

fn expectation(c: &mut Criterion) {
    let normal = Distribution::standard_normal();
    let mix = Distribution::mixture(vec![
        (0.6, Distribution::normal(0.0, 1.0).unwrap()),
        (0.4, Distribution::normal(-1.0, 2.0).unwrap()),
    ])
    .unwrap();
    c.bench_function("expect/normal_smooth", |b| {
        b.iter(|| normal.expect(|y| (0.3 * y).sin() + y * y, black_box(&[0.5]), 1e-10).unwrap())
    });
    c.bench_function("expect/mixture_smooth", |b| {
        b.iter(|| mix.expect(|y| (0.3 * y).sin() + y * y, black_box(&[0.5]), 1e-10).unwrap())
    });
}

fn expected_score(c: &mut Criterion) {
    let cone = ScoreSpec::counterexample_cone(0.05).unwrap();
    let fz0 = ScoreSpec::fz0(0.05).unwrap();
    let d = Distribution::normal(0.2, 0.1).unwrap();
    c.bench_function("expected_score/cone_closed_form", |b| {
        b.iter(|| cone.expected(black_box(&[2.0, -1.8]), &d, 1e-12).unwrap())
    });
    c.bench_function("expected_score/fz0", |b| {
        b.iter(|| fz0.expected(black_box(&[-1.0, -2.0]), &d, 1e-10).unwrap())
    });
}

fn paths(c: &mut Criterion) {
    let spec = FunctionalSpec::var_es(0.05).unwrap();
    let band = Domain::band(1.0).unwrap();
    let cone = Domain::cone_counterexample();
    c.bench_function("construct_path/band_steps", |b| {
        b.iter(|| construct_path(&band, &spec, black_box(&[5.0, 4.5]), black_box(&[0.0, -0.5])).unwrap())
    });
    c.bench_function("construct_path/cone_blocked", |b| {
        b.iter(|| construct_path(&cone, &spec, black_box(&[2.0, -1.8]), black_box(&[0.0, 0.0])).unwrap())
    });
    let cfg = SamplerConfig::default();
    let mut group = c.benchmark_group("certify");
    group.sample_size(10);
    group.bench_function("w_cone_-10_n100", |b| {
        let domain = Domain::w_cone(-10.0).unwrap();
        b.iter(|| certify_domain(&domain, &spec, 100, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, expectation, expected_score, paths);
criterion_main!(benches);
