#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use specter_core::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn symmetric(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    gaussian(rng, n, n).symmetrize()
}

/// Orthonormal columns by twice-iterated Gram-Schmidt on a Gaussian matrix.
pub fn orthonormal(rng: &mut ChaCha8Rng, d: usize, r: usize) -> DenseMatrix {
    let g = gaussian(rng, d, r);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..r {
        let mut v = g.col(j);
        for _ in 0..2 {
            for c in &cols {
                let s: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= s * b);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        cols.push(v);
    }
    DenseMatrix::from_columns(&cols).unwrap()
}

/// `V diag(values) Vᵀ`.
pub fn with_spectrum(v: &DenseMatrix, values: &[f64]) -> DenseMatrix {
    let scaled = DenseMatrix::from_fn(v.rows(), v.cols(), |i, j| v.get(i, j) * values[j]);
    scaled.matmul_t(v).symmetrize()
}

pub fn max_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).max_abs()
}

/// Each row of `E0` gets `s` distinct random columns filled with U[0, L];
/// returns `(E0 + E0ᵀ)/2`.
pub fn sparse_rows_noise(rng: &mut ChaCha8Rng, d: usize, s: usize, l: f64) -> DenseMatrix {
    let mut e0 = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in rand::seq::index::sample(rng, d, s.min(d)).into_iter() {
            let x = rng.random_range(0.0..=l);
            e0.set(i, j, x);
        }
    }
    e0.add(&e0.transpose()).scale(0.5)
}
