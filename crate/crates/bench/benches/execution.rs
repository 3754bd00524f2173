use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coherency::engine::simulate;
use coherency::grid::{random_network, RandomNetworkSpec};
use coherency::parallel::{self, Execution};
use coherency::{DisturbanceProfile, FlowModel, IntegratorConfig, ResponseFunction, Term};

fn ensemble_member(seed: u64) -> f64 {
    let net = random_network(&RandomNetworkSpec::new(12, 10, seed)).unwrap();
    let rfs: Vec<_> = net.inertia().iter().map(|&m| ResponseFunction::saturated(m, 0.2)).collect();
    let terms = (0..12)
        .map(|i| vec![Term::Constant { a: 0.01 * i as f64 - 0.05 }, Term::Sinusoid { b: 0.01, omega: 1.0, phi: 0.0 }])
        .collect();
    let profile = DisturbanceProfile::per_bus(terms, None).unwrap();
    let cfg = IntegratorConfig::with_horizon(20.0, 0.05);
    let zero = vec![0.0; 12];
    let traj = simulate(&net, &rfs, &profile, &zero, &zero, FlowModel::Sinusoidal { k: 1.0 }, &cfg, None).unwrap();
    traj.err().into_iter().fold(0.0, f64::max)
}

fn bench_ensemble(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..32).collect();
    let mut group = c.benchmark_group("ensemble_32_networks");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| parallel::map(exec, &seeds, |&s| ensemble_member(s)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_ensemble);
criterion_main!(benches);
