use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ncorm::estimator::LaplaceProblem;
use ncorm::parallel::Execution;
use ncorm::{LevySpec, Location, ScoreModel, ScoreParams};

fn laplace_estimate(c: &mut Criterion) {
    let levy = LevySpec::gamma();
    let mut group = c.benchmark_group("laplace_estimate");
    for sites in [50usize, 200] {
        let locs: Vec<Location> = (0..sites)
            .map(|i| Location::Point(vec![i as f64 / sites as f64]))
            .collect();
        let score = ScoreModel::new(
            ScoreParams::GaussianProcess { variance: 1.0, lengthscale: 0.3 },
            Arc::new(locs),
        )
        .unwrap();
        let weights = vec![0.5; sites];
        let problem = LaplaceProblem::new(&levy, &score, &weights, 2.0, 8.0).unwrap();
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, sites), &exec, |b, &exec| {
                let mut seed = 0;
                b.iter(|| {
                    seed += 1;
                    problem.estimate(seed, exec).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, laplace_estimate);
criterion_main!(benches);
