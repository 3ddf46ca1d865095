use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use risguard::algorithms::{initial_guess, run_mode, Mode};
use risguard::metrics::averaged_probabilities;
use risguard::scenario::{build_scenario, partition_channels};
use risguard::subproblems::assemble_psi_socp;
use risguard::AlgorithmSettings;
use risguard_bench::desk_config;

fn scenario(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_scenario");
    for n in [16, 64] {
        let cfg = desk_config(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &cfg, |b, cfg| b.iter(|| build_scenario(black_box(cfg)).unwrap()));
    }
    g.finish();
}

fn psi_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("psi_socp");
    for n in [16, 32] {
        let cfg = desk_config(n, 1);
        let sc = build_scenario(&cfg).unwrap();
        let ch = partition_channels(&sc.channels, &sc.partition).unwrap();
        let state = initial_guess(&ch, &cfg);
        g.bench_function(BenchmarkId::new("assemble", n), |b| {
            b.iter(|| assemble_psi_socp(&ch, &cfg, black_box(&state), 1e-3).unwrap())
        });
        let prob = assemble_psi_socp(&ch, &cfg, &state, 1e-3).unwrap();
        g.bench_function(BenchmarkId::new("solve", n), |b| b.iter(|| black_box(&prob).solve()));
    }
    g.finish();
}

fn full_run(c: &mut Criterion) {
    let cfg = desk_config(16, 3);
    let sc = build_scenario(&cfg).unwrap();
    let settings = AlgorithmSettings::default();
    let mut g = c.benchmark_group("run_mode");
    g.sample_size(10);
    g.bench_function("fixed", |b| b.iter(|| run_mode(&sc, &cfg, &settings, Mode::ProposedFixed(10)).unwrap()));
    g.bench_function("adaptive", |b| b.iter(|| run_mode(&sc, &cfg, &settings, Mode::ProposedAdaptive).unwrap()));
    g.finish();
}

fn detection(c: &mut Criterion) {
    c.bench_function("averaged_probabilities_ts200", |b| b.iter(|| averaged_probabilities(black_box(3.0), 200).unwrap()));
}

criterion_group!(benches, scenario, psi_step, full_run, detection);
criterion_main!(benches);
