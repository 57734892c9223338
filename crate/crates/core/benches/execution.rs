use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dpnibble::batch::run_seeds;
use dpnibble::correspondence::random_correspondence;
use dpnibble::graph::gen_random_max_degree;
use dpnibble::params::{EngineeringOptions, ParamTrajectory, TrajectoryConfig};
use dpnibble::{EngineConfig, Execution, Nibble};

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

/// A batch of independent seeded runs, the shape of every Monte Carlo experiment.
fn batch(c: &mut Criterion) {
    let graph = gen_random_max_degree(150, 12, 1).unwrap();
    let q = 15;
    let corr = random_correspondence(&graph, q, 1.0, 1).unwrap();
    let nibble = Nibble::new(&graph, &corr, EngineConfig::default()).unwrap();
    let schedule = ParamTrajectory::compute(&TrajectoryConfig::engineering(
        q,
        graph.max_degree() as f64,
        nibble.ln_factor(),
        &EngineeringOptions::default(),
    ));
    let mut group = c.benchmark_group("batch_of_16_runs");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| run_seeds(mode, 7, 16, |_, seed| nibble.run(&schedule, seed).is_ok()))
        });
    }
    group.finish();
}

/// One run whose per-edge loops use the given mode.
fn single_run(c: &mut Criterion) {
    let graph = gen_random_max_degree(400, 20, 2).unwrap();
    let q = 24;
    let corr = random_correspondence(&graph, q, 1.0, 2).unwrap();
    let mut group = c.benchmark_group("single_run_delta_20");
    group.sample_size(10);
    for (name, execution) in modes() {
        let config = EngineConfig {
            execution,
            ..EngineConfig::default()
        };
        let nibble = Nibble::new(&graph, &corr, config).unwrap();
        let schedule = ParamTrajectory::compute(&TrajectoryConfig::engineering(
            q,
            graph.max_degree() as f64,
            nibble.ln_factor(),
            &EngineeringOptions::default(),
        ));
        group.bench_function(name, |b| b.iter(|| nibble.run(&schedule, 3).is_ok()));
    }
    group.finish();
}

criterion_group!(benches, batch, single_run);
criterion_main!(benches);
