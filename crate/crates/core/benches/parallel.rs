//! Sequential vs data-parallel execution of the hot loops.
//!
//! Build without the default feature (`--no-default-features`) to confirm
//! that `Execution::Parallel` degrades to the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use nlfp::exec::Execution;
use nlfp::grid::PeriodicGrid;
use nlfp::model::registered;
use nlfp::particles::{sample_initial, Bandwidth, DensityEstimator, EstimatorKind};
use nlfp::pde::{self_convergence, SolverConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn particle_step(c: &mut Criterion) {
    let g = PeriodicGrid::new(1, 10.0, 256).unwrap();
    let m = registered("CUBIC-DRIFT", 1).unwrap();
    let u0 = m.initial_field(&g);
    let ens = sample_initial(&u0, 100_000, 1).unwrap();
    let est = DensityEstimator::new(EstimatorKind::GaussianKernel(Bandwidth::Auto), g).unwrap();
    let density = est.estimate(&ens, Execution::Sequential).unwrap();
    let mut group = c.benchmark_group("particle_step_1e5");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(ens.step(1e-3, &m, &density, exec).unwrap()))
        });
    }
    group.finish();
}

fn density_estimate(c: &mut Criterion) {
    let g = PeriodicGrid::new(2, 8.0, 64).unwrap();
    let m = registered("CUBIC", 2).unwrap();
    let ens = sample_initial(&m.initial_field(&g), 200_000, 2).unwrap();
    let est = DensityEstimator::new(EstimatorKind::GaussianKernel(Bandwidth::Auto), g).unwrap();
    let mut group = c.benchmark_group("kernel_estimate_2d_2e5");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(est.estimate(&ens, exec).unwrap()))
        });
    }
    group.finish();
}

fn convergence_batch(c: &mut Criterion) {
    let g = PeriodicGrid::new(1, 10.0, 128).unwrap();
    let m = registered("CUBIC", 1).unwrap();
    let u0 = m.initial_field(&g);
    let mut group = c.benchmark_group("self_convergence_3_runs");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SolverConfig {
            execution: exec,
            ..SolverConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(self_convergence(&u0, 0.1, &m, cfg, &[8e-3, 4e-3, 2e-3]).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, particle_step, density_estimate, convergence_batch);
criterion_main!(benches);
