use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dicke_bench::{chaotic_state, regular_state, reference_params};
use dicke_core::chaos::{chaoticity_map_qp, lyapunov_largest, Axis, LyapunovConfig};
use dicke_core::otoc::{evolve_ensemble, sample_ensemble, width_for_atoms, EnsembleConfig};
use dicke_core::sweep::Workers;
use dicke_core::tsa::{rosenstein_lambda, RosensteinConfig, TimeSeries};
use dicke_core::{integrate, jacobian_at, vector_field, IntegratorConfig, ModelParams, PhaseState};

fn model(c: &mut Criterion) {
    let mp = reference_params();
    let s = chaotic_state();
    c.bench_function("vector_field", |b| b.iter(|| vector_field(black_box(&s), &mp)));
    c.bench_function("jacobian_at", |b| b.iter(|| jacobian_at(black_box(&s), &mp)));
}

fn integrator(c: &mut Criterion) {
    let mp = reference_params();
    let cfg = IntegratorConfig::default();
    c.bench_function("integrate_100s", |b| b.iter(|| integrate(black_box(&chaotic_state()), &mp, 100.0, &cfg)));
}

fn lyapunov(c: &mut Criterion) {
    let mp = reference_params();
    let cfg = LyapunovConfig {
        t_total: 200.0,
        transient: 20.0,
        ..Default::default()
    };
    let mut g = c.benchmark_group("lyapunov");
    g.sample_size(20);
    g.bench_function("benettin_200s", |b| b.iter(|| lyapunov_largest(black_box(&chaotic_state()), &mp, &cfg)));
    let q = Axis::new("Q", -2.0, 2.0, 8).unwrap();
    let p = Axis::new("P", -2.0, 2.0, 8).unwrap();
    let short = LyapunovConfig {
        t_total: 50.0,
        transient: 5.0,
        ..Default::default()
    };
    g.bench_function("qp_map_8x8_50s", |b| {
        b.iter(|| chaoticity_map_qp(-1.5, &mp, &q, &p, 1, &short, 1, Workers::Auto))
    });
    g.finish();
}

fn rosenstein(c: &mut Criterion) {
    let traj = integrate(&chaotic_state(), &reference_params(), 60.0, &IntegratorConfig::default()).unwrap();
    let ts = TimeSeries::from_trajectory(&traj).unwrap();
    let mut g = c.benchmark_group("rosenstein");
    g.sample_size(10);
    g.bench_function("series_60s", |b| b.iter(|| rosenstein_lambda(black_box(&ts), &RosensteinConfig::default())));
    let reg = integrate(&regular_state(), &reference_params(), 60.0, &IntegratorConfig::default()).unwrap();
    let ts = TimeSeries::from_trajectory(&reg).unwrap();
    g.bench_function("regular_60s", |b| b.iter(|| rosenstein_lambda(black_box(&ts), &RosensteinConfig::default())));
    g.finish();
}

fn ensemble(c: &mut Criterion) {
    let mp = ModelParams::new(0.5, 0.7, 0.66).unwrap();
    let cfg = EnsembleConfig {
        n_traj: 32,
        width_variance: width_for_atoms(1e4),
        t_end: 20.0,
        seed: 1,
        ..EnsembleConfig::new(PhaseState::new(0.0, -(0.4f64).sqrt(), 0.0, 0.0).unwrap())
    };
    let samples = sample_ensemble(&cfg).unwrap();
    let mut g = c.benchmark_group("otoc");
    g.sample_size(10);
    g.bench_function("evolve_32x20s", |b| b.iter(|| evolve_ensemble(black_box(&samples), &mp, &cfg, Workers::Auto)));
    g.finish();
}

criterion_group!(benches, model, integrator, lyapunov, rosenstein, ensemble);
criterion_main!(benches);
