#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rsac_core::SymMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform_vecs(rng: &mut ChaCha8Rng, n: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(lo..hi)).collect()).collect()
}

/// Symmetric test matrices of several shapes: dense random, low-rank PSD,
/// clustered spectrum, and diagonal with repeats.
pub fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize) -> SymMatrix {
    match rng.gen_range(0..4) {
        0 => {
            let scale = 10f64.powi(rng.gen_range(-3..4));
            SymMatrix::from_fn(dim, |_, _| scale * rng.gen_range(-1.0..1.0))
        }
        1 => {
            let rank = rng.gen_range(1..=dim);
            let factors: Vec<Vec<f64>> = (0..rank).map(|_| (0..dim).map(|_| normal(rng)).collect()).collect();
            let mut a = SymMatrix::zeros(dim);
            for f in &factors {
                a.add_outer(f).unwrap();
            }
            a
        }
        2 => {
            let base = rng.gen_range(-5.0..5.0);
            SymMatrix::from_fn(dim, |i, j| if i == j { base } else { 1e-6 * rng.gen_range(-1.0..1.0) })
        }
        _ => {
            let diag: Vec<f64> = (0..dim).map(|_| rng.gen_range(0..3) as f64).collect();
            SymMatrix::from_diagonal(&diag)
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Samples from N(mean, L Lᵀ).
pub fn gaussian_samples(rng: &mut ChaCha8Rng, n: usize, mean: &[f64], l: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = mean.len();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
            (0..d).map(|i| mean[i] + (0..=i).map(|j| l[i][j] * z[j]).sum::<f64>()).collect()
        })
        .collect()
}

/// Population mean and covariance by plain loops.
pub fn naive_moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mut mean = vec![0.0; d];
    for s in samples {
        for i in 0..d {
            mean[i] += s[i];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    for row in &mut cov {
        for v in row {
            *v /= n;
        }
    }
    (mean, cov)
}
