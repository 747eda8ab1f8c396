use super::matrix::DenseMatrix;
use super::sum::dot;
use crate::error::{Error, Result};

/// LU factorisation with partial (row) pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    // Unit-lower L below the diagonal, U on and above it.
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorises a square matrix. A pivot at or below `1e-14·‖A‖max` is
    /// reported as singular.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if a.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let n = a.rows();
        let floor = 1e-14 * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| lu.get(x, k).abs().total_cmp(&lu.get(y, k).abs()))
                .unwrap_or(k);
            let pivot = lu.get(p, k);
            if pivot.abs() <= floor || pivot == 0.0 {
                return Err(Error::Singular(format!(
                    "zero pivot {pivot:e} in column {k} of a {n}x{n} matrix"
                )));
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let t = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, t);
                }
            }
            let head = lu.row(k).to_vec();
            for i in k + 1..n {
                let row = lu.row_mut(i);
                let m = row[k] / pivot;
                row[k] = m;
                if m != 0.0 {
                    for j in k + 1..n {
                        row[j] -= m * head[j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            y[i] -= dot(&row[..i], &y[..i]);
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &y[i + 1..]);
            y[i] = (y[i] - s) / row[i];
        }
        y
    }

    /// Solves `A X = B` column by column; overflow is reported as singular.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        assert_eq!(b.rows(), self.n);
        let cols: Vec<Vec<f64>> = (0..b.cols()).map(|j| self.solve(&b.col(j))).collect();
        DenseMatrix::from_columns(&cols)
            .map_err(|_| Error::Singular("solution overflowed".into()))
    }

    pub fn inverse(&self) -> Result<DenseMatrix> {
        self.solve_matrix(&DenseMatrix::identity(self.n))
    }
}
