//! Cyclic Jacobi rotations for dense symmetric matrices.

use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;

const MAX_SWEEPS: usize = 100;
const OFF_TOL: f64 = 1e-13;

/// Unsorted eigenpairs; eigenvector `i` is row `i` of the returned matrix.
pub(crate) fn eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.rows();
    let mut m = a.clone();
    let mut vt = DenseMatrix::identity(n);
    let scale = a.frobenius();
    if scale == 0.0 {
        return Ok((vec![0.0; n], vt));
    }

    for sweep in 0..=MAX_SWEEPS {
        let off = off_diagonal(&m);
        if off <= OFF_TOL * scale {
            return Ok((m.diag(), vt));
        }
        if sweep == MAX_SWEEPS {
            return Err(Error::NonConvergence {
                iterations: MAX_SWEEPS,
                last: off,
                trace: vec![],
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut vt, p, q);
            }
        }
    }
    unreachable!()
}

fn off_diagonal(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m.get(i, j) * m.get(i, j);
            }
        }
    }
    acc.sqrt()
}

// Applies the rotation in the (p, q) plane that annihilates m[p][q].
fn rotate(m: &mut DenseMatrix, vt: &mut DenseMatrix, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == 0.0 {
        return;
    }
    let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
    let t = if theta.is_finite() && theta.abs() < 1e150 {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    } else {
        0.5 / theta
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = m.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let (mkp, mkq) = (m.get(k, p), m.get(k, q));
        let (np, nq) = (c * mkp - s * mkq, s * mkp + c * mkq);
        m.set(k, p, np);
        m.set(p, k, np);
        m.set(k, q, nq);
        m.set(q, k, nq);
    }
    m.set(p, p, m.get(p, p) - t * apq);
    m.set(q, q, m.get(q, q) + t * apq);
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);

    for k in 0..n {
        let (vp, vq) = (vt.get(p, k), vt.get(q, k));
        vt.set(p, k, c * vp - s * vq);
        vt.set(q, k, s * vp + c * vq);
    }
}
