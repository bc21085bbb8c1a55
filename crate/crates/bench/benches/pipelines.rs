use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use purcell_core::device::{fast_readout_specs, DeviceGeometry};
use purcell_core::leakage::{simulate_pi_qnd, LeakageChain, SequenceSchedule};
use purcell_core::measurement::error_budget;
use purcell_core::multiplex::{default_regimes, regime_report, MultiplexGeometry, Variant};
use purcell_core::network::{linspace, s21_sweep};
use purcell_core::tuning::{tuning_curve, FilterParams, FluxBias};

fn network(c: &mut Criterion) {
    let net = DeviceGeometry::calibrated().network(0.8e-9).unwrap();
    let freqs = linspace(5.5e9, 8.0e9, 2001);
    c.bench_function("s21_sweep_2001", |b| b.iter(|| s21_sweep(black_box(&net), &freqs).unwrap()));

    let p = FilterParams::calibrated();
    let biases: Vec<FluxBias> = linspace(0.0, 0.45, 200).into_iter().map(FluxBias::from_phi0).collect();
    c.bench_function("tuning_curve_200", |b| b.iter(|| tuning_curve(black_box(&p), &biases)));
}

fn readout(c: &mut Criterion) {
    let spec = fast_readout_specs().unwrap()[0].clone();
    c.bench_function("error_budget_1e5", |b| b.iter(|| error_budget(black_box(&spec), 100_000, 1).unwrap()));
}

fn leakage(c: &mut Criterion) {
    let chain = LeakageChain::new(0.0043, 0.0051);
    let sched = SequenceSchedule::pi_qnd(150);
    c.bench_function("pi_qnd_4000_shots", |b| {
        b.iter(|| simulate_pi_qnd(black_box(&chain), &sched, 4000, 7).unwrap())
    });
}

fn multiplex(c: &mut Criterion) {
    let kind = Variant::VariableBandwidth;
    let geom = MultiplexGeometry::default_for(kind);
    let regimes = default_regimes(kind);
    let mut g = c.benchmark_group("multiplex");
    g.sample_size(10);
    g.bench_function("regime_report", |b| b.iter(|| regime_report(kind, black_box(&geom), &regimes).unwrap()));
    g.finish();
}

criterion_group!(benches, network, readout, leakage, multiplex);
criterion_main!(benches);
