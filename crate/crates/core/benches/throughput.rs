use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tisp::par::with_jobs;
use tisp::simulate::{run_decay_experiment, Ensemble, ExperimentSpec, LambdaPolicy, NoiseKind};

fn spec() -> ExperimentSpec {
    ExperimentSpec {
        ensemble: Ensemble::GaussianIid,
        n: 200,
        p: 100,
        j_star: 5,
        signal_magnitude: None,
        sigma: 1.0,
        noise_kind: NoiseKind::Gaussian,
        seeds: (1..=16).collect(),
        rules: vec!["soft".into(), "hard".into()],
        lambda_policy: LambdaPolicy::Theory { a: 1.0 },
        schedule: None,
        rho_epsilon: None,
        tol: None,
        max_iter: None,
    }
}

fn decay_jobs(c: &mut Criterion) {
    let spec = spec();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut group = c.benchmark_group("decay_experiment");
    group.sample_size(10);
    for (label, jobs) in [("jobs=1", Some(1)), ("all_threads", None)] {
        group.bench_with_input(BenchmarkId::new(label, threads), &jobs, |b, &jobs| {
            b.iter(|| with_jobs(jobs, || run_decay_experiment(black_box(&spec)).unwrap()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, decay_jobs);
criterion_main!(benches);
