use std::hint::black_box;

use conflasso::conformal::{default_range, grid_set_with, ConformalLasso, ExactOptions};
use conflasso::parallel::map_indexed;
use conflasso::simdata::{generate, DimRegime, ModelFamily, ModelSpec};
use conflasso::tuning::{cross_validate, CvOptions};
use conflasso::{Parallelism, PenaltyConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn grid(c: &mut Criterion) {
    let spec = ModelSpec::new(ModelFamily::LinearGaussian, DimRegime::Low, 1);
    let (train, test) = generate(&spec, 100, 1).unwrap();
    let penalty = PenaltyConfig::lasso(5.0).unwrap();
    let range = default_range(train.y().as_slice());
    let step = (range.1 - range.0) / 199.0;
    let mut group = c.benchmark_group("grid_200_points");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| grid_set_with(&train, &test[0].0, penalty, 0.1, range, step, mode).unwrap())
        });
    }
    group.finish();
}

fn exact_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_100_queries");
    group.sample_size(10);
    for regime in [DimRegime::Low, DimRegime::High] {
        let spec = ModelSpec::new(ModelFamily::HeavyTailCorrelated, regime, 2);
        let (train, test) = generate(&spec, regime.n(), 100).unwrap();
        let lambda = match regime {
            DimRegime::Low => 5.0,
            DimRegime::High => 40.0,
        };
        let cl = ConformalLasso::new(&train, PenaltyConfig::lasso(lambda).unwrap()).unwrap();
        let range = default_range(train.y().as_slice());
        for (name, mode) in MODES {
            let id = BenchmarkId::new(format!("{regime:?}").to_lowercase(), name);
            group.bench_function(id, |b| {
                b.iter(|| {
                    map_indexed(test.len(), mode, |k| {
                        cl.exact_set(&test[k].0, 0.1, range, ExactOptions::default())
                            .unwrap()
                            .intervals
                            .len()
                    })
                })
            });
        }
    }
    group.finish();
}

fn cv(c: &mut Criterion) {
    let spec = ModelSpec::new(ModelFamily::LinearGaussian, DimRegime::Low, 3);
    let (train, _) = generate(&spec, 100, 0).unwrap();
    let mut group = c.benchmark_group("cv_10_fold");
    group.sample_size(10);
    for (name, mode) in MODES {
        let opts = CvOptions {
            mode,
            ..CvOptions::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(cross_validate(&train, &opts).unwrap().best_lambda))
        });
    }
    group.finish();
}

criterion_group!(benches, grid, exact_batch, cv);
criterion_main!(benches);
