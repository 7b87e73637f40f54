use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdibarrier::systems::{interval_shift_problem, polytopic_problem};
use sdibarrier::{LambdaEngine, LambdaTarget, StateVector};
use sdibarrier_bench::sample_path;

fn polytopic(c: &mut Criterion) {
    let p = polytopic_problem();
    let x = StateVector::vector(vec![2.0, 0.5]).unwrap();
    let engine = LambdaEngine::default();
    let mut group = c.benchmark_group("polytopic_lambda");
    for k in [4, 8, 12] {
        let path = sample_path(&p, k, 1);
        group.bench_with_input(BenchmarkId::new("functionals", k), &path, |b, path| {
            b.iter(|| engine.closed_form(&p.dynamics, &p.barrier, &x, path).unwrap())
        });
        if k <= 8 {
            group.bench_with_input(BenchmarkId::new("tree", k), &path, |b, path| {
                b.iter(|| {
                    engine
                        .exact_tree(&p.dynamics, LambdaTarget::Barrier(&p.barrier), &x, path)
                        .unwrap()
                })
            });
        }
    }
    group.finish();
}

fn ell_estimate(c: &mut Criterion) {
    let p = interval_shift_problem();
    let x = StateVector::scalar(1.0);
    let engine = LambdaEngine::default();
    c.bench_function("ell_estimate_interval_10k", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            engine
                .ell_estimate(&p.dynamics, &p.barrier, &p.dist, &x, 4, 10_000, &mut rng)
                .unwrap()
        })
    });
}

criterion_group!(benches, polytopic, ell_estimate);
criterion_main!(benches);
