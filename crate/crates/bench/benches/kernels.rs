use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsac_core::linalg::{eig_sym, eig_sym_jacobi};
use rsac_core::qdc::predict;
use rsac_core::{ClassId, QdcConfig, RankPolicy, SufficientStats, SymMatrix, VectorBank};

const D: usize = 784;

/// Digit-like images: a random blob of bright pixels on a dark background,
/// about a fifth of the pixels non-zero.
fn images(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let (cy, cx) = (rng.gen_range(8..20) as f64, rng.gen_range(8..20) as f64);
            (0..D)
                .map(|p| {
                    let (y, x) = ((p / 28) as f64, (p % 28) as f64);
                    let r2 = (y - cy).powi(2) + (x - cx).powi(2);
                    if r2 < 30.0 && rng.gen_bool(0.8) {
                        rng.gen_range(100.0..255.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn scatter_of(xs: &[Vec<f64>]) -> SymMatrix {
    let mut s = SufficientStats::new(xs[0].len());
    s.accumulate(xs).unwrap();
    s.covariance().unwrap()
}

fn bench_eig(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("eig_sym");
    group.sample_size(10);
    for dim in [64, 256, D] {
        let xs: Vec<Vec<f64>> = images(&mut rng, 600).into_iter().map(|x| x[..dim].to_vec()).collect();
        let cov = scatter_of(&xs);
        group.bench_with_input(BenchmarkId::new("tridiagonal-ql", dim), &cov, |b, a| b.iter(|| eig_sym(black_box(a)).unwrap()));
        if dim <= 256 {
            group.bench_with_input(BenchmarkId::new("jacobi", dim), &cov, |b, a| b.iter(|| eig_sym_jacobi(black_box(a)).unwrap()));
        }
    }
    group.finish();
}

fn bench_accumulate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs = images(&mut rng, 500);
    let mut group = c.benchmark_group("accumulate");
    group.sample_size(20);
    group.bench_function("500 images", |b| {
        b.iter_batched(|| SufficientStats::new(D), |mut s| s.accumulate(black_box(&xs)).unwrap(), BatchSize::LargeInput)
    });
    group.finish();
}

fn bench_predict(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bank = VectorBank::new(D, RankPolicy::FixedK(150)).unwrap();
    for class in 0..10 as ClassId {
        bank.accumulate(class, &images(&mut rng, 300)).unwrap();
    }
    bank.finalize_many(&(0..10).collect::<Vec<_>>()).unwrap();
    bank.freeze();
    let queries = images(&mut rng, 64);
    let cfg = QdcConfig::default();
    c.bench_function("predict 10 classes k=150", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % queries.len();
            predict(&bank, black_box(&queries[i]), cfg).unwrap().label
        })
    });
}

criterion_group!(benches, bench_eig, bench_accumulate, bench_predict);
criterion_main!(benches);
