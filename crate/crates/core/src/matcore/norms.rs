use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::sum::{dot, norm2, pairwise_sum_by};
use crate::error::{Error, Result};
use crate::spectra;

/// Tolerance on `‖VᵀV − I‖max` accepted as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;

fn nonempty(m: &DenseMatrix) -> Result<()> {
    if m.is_empty() {
        Err(Error::EmptyMatrix)
    } else {
        Ok(())
    }
}

/// Maximum absolute column sum.
pub fn norm_one(m: &DenseMatrix) -> Result<f64> {
    nonempty(m)?;
    Ok((0..m.cols())
        .map(|j| pairwise_sum_by(m.rows(), |i| m.get(i, j).abs()))
        .fold(0.0, f64::max))
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &DenseMatrix) -> Result<f64> {
    nonempty(m)?;
    Ok((0..m.rows())
        .map(|i| {
            let row = m.row(i);
            pairwise_sum_by(row.len(), |j| row[j].abs())
        })
        .fold(0.0, f64::max))
}

/// Largest absolute entry.
pub fn max_norm(m: &DenseMatrix) -> Result<f64> {
    nonempty(m)?;
    Ok(m.max_abs())
}

pub fn frobenius(m: &DenseMatrix) -> Result<f64> {
    nonempty(m)?;
    Ok(m.frobenius())
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    nonempty(m)?;
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let n = m.cols();
    let mt = m.transpose();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    x[0] += 1e-3;
    normalize(&mut x);

    let mut sigma = 0.0f64;
    let mut restarted = false;
    for _ in 0..POWER_MAX_ITER {
        let y = m.matvec(&x);
        let next = norm2(&y);
        let mut z = mt.matvec(&y);
        if norm2(&z) == 0.0 {
            // Start vector fell into the null space; retry from the heaviest column.
            if restarted {
                return Ok(sigma.max(next));
            }
            restarted = true;
            let k = (0..n)
                .max_by(|&a, &b| column_norm(m, a).total_cmp(&column_norm(m, b)))
                .unwrap_or(0);
            x = vec![0.0; n];
            x[k] = 1.0;
            continue;
        }
        let converged = (next - sigma).abs() <= POWER_TOL * next;
        sigma = next;
        if converged {
            return Ok(sigma);
        }
        normalize(&mut z);
        x = z;
    }
    Ok(sigma)
}

fn column_norm(m: &DenseMatrix, j: usize) -> f64 {
    pairwise_sum_by(m.rows(), |i| m.get(i, j) * m.get(i, j))
}

fn normalize(x: &mut [f64]) {
    let s = norm2(x);
    for v in x.iter_mut() {
        *v /= s;
    }
}

/// `max{√(d2/d1)‖E‖1, √(d1/d2)‖E‖∞}` for a `d1 × d2` matrix.
pub fn tau0(e: &DenseMatrix) -> Result<f64> {
    let (d1, d2) = (e.rows() as f64, e.cols() as f64);
    Ok(((d2 / d1).sqrt() * norm_one(e)?).max((d1 / d2).sqrt() * norm_inf(e)?))
}

/// `‖VᵀV − I‖max`.
pub fn orthonormality_defect(v: &DenseMatrix) -> f64 {
    let g = v.t_matmul(v);
    let mut worst = 0.0f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

/// Errors unless `V` has orthonormal columns within [`ORTHONORMAL_TOL`].
pub fn check_orthonormal(v: &DenseMatrix) -> Result<()> {
    nonempty(v)?;
    let deviation = orthonormality_defect(v);
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// Coherence `(d/r)·max_i ‖V_i·‖²` of a `d × r` orthonormal frame.
pub fn coherence(v: &DenseMatrix) -> Result<f64> {
    check_orthonormal(v)?;
    let (d, r) = v.shape();
    let heaviest = (0..d).map(|i| dot(v.row(i), v.row(i))).fold(0.0, f64::max);
    Ok(d as f64 / r as f64 * heaviest)
}

/// Coherences of a left/right frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub mu_u: f64,
    pub mu_v: f64,
    pub mu0: f64,
}

impl CoherenceReport {
    pub fn new(u: &DenseMatrix, v: &DenseMatrix) -> Result<Self> {
        let mu_u = coherence(u)?;
        let mu_v = coherence(v)?;
        Ok(Self {
            mu_u,
            mu_v,
            mu0: mu_u.max(mu_v),
        })
    }
}

/// `[[0, M], [Mᵀ, 0]]`.
pub fn hermitian_dilation(m: &DenseMatrix) -> DenseMatrix {
    let (d1, d2) = m.shape();
    let n = d1 + d2;
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..d1 {
        for j in 0..d2 {
            let x = m.get(i, j);
            out.set(i, d1 + j, x);
            out.set(d1 + j, i, x);
        }
    }
    out
}

/// Max-norm with the top `d1` rows scaled by `√d1` and the rest by `√d2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMaxNorm {
    pub d1: usize,
    pub d2: usize,
    pub value: f64,
}

impl WeightedMaxNorm {
    pub fn compute(m: &DenseMatrix, d1: usize, d2: usize) -> Result<Self> {
        if m.rows() != d1 + d2 {
            return Err(Error::DimensionMismatch(format!(
                "weighted max-norm expects {} rows, got {}",
                d1 + d2,
                m.rows()
            )));
        }
        let block_max = |rows: std::ops::Range<usize>| {
            rows.flat_map(|i| m.row(i).iter().map(|x| x.abs()))
                .fold(0.0f64, f64::max)
        };
        let top = (d1 as f64).sqrt() * block_max(0..d1);
        let bottom = (d2 as f64).sqrt() * block_max(d1..d1 + d2);
        Ok(Self {
            d1,
            d2,
            value: top.max(bottom),
        })
    }
}

pub fn weighted_max_norm(m: &DenseMatrix, d1: usize, d2: usize) -> Result<f64> {
    WeightedMaxNorm::compute(m, d1, d2).map(|w| w.value)
}

/// `√(d1/d2)‖R‖∞ ∨ √(d2/d1)‖R‖1` for the residual `R = A − A_r`.
pub fn epsilon0(a: &DenseMatrix, r: usize) -> Result<f64> {
    nonempty(a)?;
    let resid = a.sub(&spectra::low_rank_approx(a, r)?);
    balanced_residual(&resid)
}

pub(crate) fn balanced_residual(resid: &DenseMatrix) -> Result<f64> {
    let (d1, d2) = (resid.rows() as f64, resid.cols() as f64);
    Ok(((d1 / d2).sqrt() * norm_inf(resid)?).max((d2 / d1).sqrt() * norm_one(resid)?))
}

/// The norm zoo for one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub rows: usize,
    pub cols: usize,
    pub one_norm: f64,
    pub inf_norm: f64,
    pub max_norm: f64,
    pub spectral_norm: f64,
    pub frobenius: f64,
    pub tau0: f64,
    /// Balanced rank-`r` residual, present when a rank was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon0: Option<f64>,
}

impl NormReport {
    pub fn compute(m: &DenseMatrix, rank: Option<usize>) -> Result<Self> {
        Ok(Self {
            rows: m.rows(),
            cols: m.cols(),
            one_norm: norm_one(m)?,
            inf_norm: norm_inf(m)?,
            max_norm: max_norm(m)?,
            spectral_norm: spectral_norm(m)?,
            frobenius: frobenius(m)?,
            tau0: tau0(m)?,
            epsilon0: rank.map(|r| epsilon0(m, r)).transpose()?,
        })
    }
}
