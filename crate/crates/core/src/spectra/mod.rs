//! Symmetric eigendecomposition, SVD through the Hermitian dilation, and
//! helpers for comparing eigenvector frames.

mod jacobi;
mod tridiag;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::sum::{dot, norm2};
use crate::matcore::{check_orthonormal, hermitian_dilation, DenseMatrix};

/// Matrices up to this order use Jacobi; larger ones go through the
/// tridiagonal QL path.
pub const JACOBI_MAX_DIM: usize = 128;

const PARTIAL_MIN_DIM: usize = 64;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMode {
    Symmetric,
    SingularLeft,
    SingularRight,
}

/// Eigenpairs (or one side of the singular triplets) with vectors as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    pub mode: SpectralMode,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Leading `r` pairs.
    pub fn truncate(&self, r: usize) -> Result<Self> {
        if r > self.len() {
            return Err(Error::RankTooLarge {
                rank: r,
                limit: self.len(),
            });
        }
        Ok(Self {
            values: self.values[..r].to_vec(),
            vectors: self.vectors.columns(0..r),
            mode: self.mode,
        })
    }

    /// `Σ λ_i v_i v_iᵀ` over the stored pairs.
    pub fn reconstruct(&self) -> DenseMatrix {
        let scaled = DenseMatrix::from_fn(self.vectors.rows(), self.len(), |i, j| {
            self.vectors.get(i, j) * self.values[j]
        });
        scaled.matmul_t(&self.vectors)
    }
}

/// Errors unless `a` is square, nonempty and symmetric within
/// `1e-10·‖a‖max`.
pub fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if a.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let asymmetry = a.asymmetry();
    if asymmetry > SYMMETRY_TOL * a.max_abs() {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Order by |λ| descending, ties by value descending.
fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .total_cmp(&values[a].abs())
            .then(values[b].total_cmp(&values[a]))
    });
    idx
}

/// Flips `v` so its largest-magnitude entry is positive (first index wins
/// near-ties).
fn fix_sign(v: &mut [f64]) {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(k) = v.iter().position(|x| x.abs() >= peak * (1.0 - 1e-12)) {
        if v[k] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn assemble(values: &[f64], rows_as_vectors: Vec<Vec<f64>>, order: &[usize]) -> SpectralDecomposition {
    let mut cols = Vec::with_capacity(order.len());
    let mut vals = Vec::with_capacity(order.len());
    for &k in order {
        let mut v = rows_as_vectors[k].clone();
        fix_sign(&mut v);
        cols.push(v);
        vals.push(values[k]);
    }
    SpectralDecomposition {
        values: vals,
        vectors: columns_matrix(rows_as_vectors.first().map_or(0, Vec::len), &cols),
        mode: SpectralMode::Symmetric,
    }
}

fn columns_matrix(rows: usize, cols: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

fn rows_of(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Full eigendecomposition of a symmetric matrix, sorted by |λ| descending.
pub fn eig_sym(a: &DenseMatrix) -> Result<SpectralDecomposition> {
    check_symmetric(a)?;
    let a = a.symmetrize();
    let (values, vt) = if a.rows() <= JACOBI_MAX_DIM {
        jacobi::eigen(&a)?
    } else {
        tridiag::eigen_full(&a)?
    };
    let order = magnitude_order(&values);
    Ok(assemble(&values, rows_of(&vt), &order))
}

/// All eigenvalues of a symmetric matrix, sorted by |λ| descending. Above
/// the Jacobi cutoff no vectors are accumulated.
pub fn eigvals_sym(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let a = a.symmetrize();
    let values = if a.rows() <= JACOBI_MAX_DIM {
        jacobi::eigen(&a)?.0
    } else {
        tridiag::eigenvalues(&a)?.0
    };
    Ok(magnitude_order(&values).into_iter().map(|i| values[i]).collect())
}

/// The `k` leading eigenpairs by |λ|.
///
/// Large inputs avoid the full vector accumulation: eigenvalues come from the
/// tridiagonal QL sweep and only the selected vectors are computed, by
/// inverse iteration.
pub fn eig_sym_top(a: &DenseMatrix, k: usize) -> Result<SpectralDecomposition> {
    check_symmetric(a)?;
    let n = a.rows();
    if k > n {
        return Err(Error::RankTooLarge { rank: k, limit: n });
    }
    if n < PARTIAL_MIN_DIM {
        return eig_sym(a)?.truncate(k);
    }
    let a = a.symmetrize();
    let (values, tri) = tridiag::eigenvalues(&a)?;
    let order: Vec<usize> = magnitude_order(&values).into_iter().take(k).collect();
    let chosen: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let vectors = tridiag::eigenvectors(&tri, &chosen);
    let identity: Vec<usize> = (0..k).collect();
    Ok(assemble(&chosen, vectors, &identity))
}

/// Top-`r` singular triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn left(&self) -> SpectralDecomposition {
        SpectralDecomposition {
            values: self.sigma.clone(),
            vectors: self.u.clone(),
            mode: SpectralMode::SingularLeft,
        }
    }

    pub fn right(&self) -> SpectralDecomposition {
        SpectralDecomposition {
            values: self.sigma.clone(),
            vectors: self.v.clone(),
            mode: SpectralMode::SingularRight,
        }
    }

    /// `U diag(σ) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = DenseMatrix::from_fn(self.u.rows(), self.sigma.len(), |i, j| {
            self.u.get(i, j) * self.sigma[j]
        });
        us.matmul_t(&self.v)
    }
}

/// Top-`r` singular triplets read off the positive eigenpairs of the
/// Hermitian dilation: eigenvalue `σ_i` carries `(u_i; v_i)/√2`.
pub fn svd(m: &DenseMatrix, r: usize) -> Result<Svd> {
    if m.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let (d1, d2) = m.shape();
    let limit = d1.min(d2);
    if r > limit {
        return Err(Error::RankTooLarge { rank: r, limit });
    }
    let dil = hermitian_dilation(m);
    let top = eig_sym_top(&dil, (2 * r).min(d1 + d2))?;
    let mut idx: Vec<usize> = (0..top.len()).collect();
    idx.sort_by(|&a, &b| top.values[b].total_cmp(&top.values[a]));

    let mut us: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut sigma = Vec::with_capacity(r);
    for &k in idx.iter().take(r) {
        let col = top.vectors.col(k);
        let u = complete(col[..d1].to_vec(), &us);
        let v = complete(col[d1..].to_vec(), &vs);
        us.push(u);
        vs.push(v);
        sigma.push(top.values[k].max(0.0));
    }
    Ok(Svd {
        u: columns_matrix(d1, &us),
        sigma,
        v: columns_matrix(d2, &vs),
    })
}

// Normalises a half of a dilation eigenvector. Halves of zero-singular-value
// vectors can vanish or mix; those are replaced by a unit vector orthogonal to
// the columns already chosen.
fn complete(mut x: Vec<f64>, previous: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let s = norm2(&x);
    if s >= 0.5 {
        x.iter_mut().for_each(|v| *v /= s);
        return x;
    }
    for seed in std::iter::once(x.clone()).chain((0..n).map(|j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        e
    })) {
        let mut y = seed;
        for _ in 0..2 {
            for p in previous {
                let c = dot(&y, p);
                y.iter_mut().zip(p).for_each(|(yi, pi)| *yi -= c * pi);
            }
        }
        let s = norm2(&y);
        if s > 1e-3 {
            y.iter_mut().for_each(|v| *v /= s);
            return y;
        }
    }
    x
}

/// Best rank-`r` approximation. Symmetric input uses the leading `r`
/// eigenpairs by |λ|; anything else the leading singular triplets.
pub fn low_rank_approx(a: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    if a.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let limit = a.rows().min(a.cols());
    if r > limit {
        return Err(Error::RankTooLarge { rank: r, limit });
    }
    if r == 0 {
        return Ok(DenseMatrix::zeros(a.rows(), a.cols()));
    }
    if a.is_square() && a.asymmetry() <= 1e-12 * a.max_abs() {
        Ok(eig_sym_top(a, r)?.reconstruct())
    } else {
        Ok(svd(a, r)?.reconstruct())
    }
}

fn same_shape(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} versus {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn sup_distance(a: &[f64], b: &[f64], sign: f64) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((sign * x - y).abs()))
}

/// Flips each column of `vhat` to minimise its ℓ∞ distance to `vref`
/// (keeping the original sign on ties).
pub fn align_up_to_sign(vhat: &DenseMatrix, vref: &DenseMatrix) -> Result<DenseMatrix> {
    same_shape(vhat, vref)?;
    let mut out = vhat.clone();
    for j in 0..vhat.cols() {
        let (h, r) = (vhat.col(j), vref.col(j));
        if sup_distance(&h, &r, -1.0) < sup_distance(&h, &r, 1.0) {
            out.scale_col(j, -1.0);
        }
    }
    Ok(out)
}

/// `‖M1M1ᵀ − M2M2ᵀ‖2` for two orthonormal frames of equal shape, computed as
/// `‖(I − M1M1ᵀ)M2‖2` to stay accurate for small angles.
pub fn subspace_distance(m1: &DenseMatrix, m2: &DenseMatrix) -> Result<f64> {
    same_shape(m1, m2)?;
    check_orthonormal(m1)?;
    check_orthonormal(m2)?;
    let resid = m2.sub(&m1.matmul(&m1.t_matmul(m2)));
    let gram = resid.t_matmul(&resid).symmetrize();
    let top = eig_sym(&gram)?;
    let lambda = top.values.iter().fold(0.0f64, |m, x| m.max(*x));
    Ok(lambda.max(0.0).sqrt().min(1.0))
}

/// `S⁻¹`, `S^{1/2}` and `S^{-1/2}` of a symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PdFunctions {
    pub inverse: DenseMatrix,
    pub sqrt: DenseMatrix,
    pub inv_sqrt: DenseMatrix,
}

pub fn matrix_inverse_and_sqrt(s: &DenseMatrix) -> Result<PdFunctions> {
    let eig = eig_sym(s)?;
    let lambda_max = eig.values.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    let lambda_min = eig.values.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    if !(lambda_min > 1e-12 * lambda_max) {
        return Err(Error::NotPositiveDefinite {
            lambda_min,
            lambda_max,
        });
    }
    let apply = |f: &dyn Fn(f64) -> f64| {
        SpectralDecomposition {
            values: eig.values.iter().map(|&x| f(x)).collect(),
            vectors: eig.vectors.clone(),
            mode: SpectralMode::Symmetric,
        }
        .reconstruct()
        .symmetrize()
    };
    Ok(PdFunctions {
        inverse: apply(&|x| 1.0 / x),
        sqrt: apply(&|x| x.sqrt()),
        inv_sqrt: apply(&|x| 1.0 / x.sqrt()),
    })
}
