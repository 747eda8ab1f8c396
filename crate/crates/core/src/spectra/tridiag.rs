//! Householder tridiagonalisation, implicit QL, and inverse iteration.
//!
//! The QL sweep follows the EISPACK `tql2` routine. Eigenvectors are stored as
//! rows throughout so that plane rotations touch contiguous memory.

use crate::error::{Error, Result};
use crate::matcore::sum::{dot, norm2};
use crate::matcore::DenseMatrix;

const EPS: f64 = f64::EPSILON;
const QL_MAX_ITER: usize = 60;
const INVERSE_ITERATIONS: usize = 3;

/// `A = Q T Qᵀ` with `Q` kept as a product of reflectors.
pub(crate) struct Tridiagonal {
    pub d: Vec<f64>,
    /// `e[i] = T[i, i+1]`; the last slot is zero.
    pub e: Vec<f64>,
    reflectors: Vec<(Vec<f64>, f64)>,
}

impl Tridiagonal {
    pub fn new(a: &DenseMatrix) -> Self {
        let n = a.rows();
        let mut w = a.clone();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(1));

        for k in 0..n.saturating_sub(1) {
            let m = n - k - 1;
            let x = w.row(k)[k + 1..].to_vec();
            let tail = norm2(&x[1..]);
            if m == 1 || tail == 0.0 {
                e[k] = x[0];
                reflectors.push((Vec::new(), 0.0));
                continue;
            }
            let norm = norm2(&x);
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let mut v = x;
            v[0] -= alpha;
            let beta = 2.0 / dot(&v, &v);
            e[k] = alpha;

            let p: Vec<f64> = (0..m)
                .map(|i| beta * dot(&w.row(k + 1 + i)[k + 1..], &v))
                .collect();
            let kk = 0.5 * beta * dot(&p, &v);
            let q: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kk * vi).collect();
            for i in 0..m {
                let row = &mut w.row_mut(k + 1 + i)[k + 1..];
                let (vi, qi) = (v[i], q[i]);
                for j in 0..m {
                    row[j] -= vi * q[j] + qi * v[j];
                }
            }
            reflectors.push((v, beta));
        }
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = w.get(k, k);
        }
        Self { d, e, reflectors }
    }

    /// Maps an eigenvector of `T` to one of `A` in place.
    pub fn back_transform(&self, y: &mut [f64]) {
        for (k, (v, beta)) in self.reflectors.iter().enumerate().rev() {
            if *beta == 0.0 {
                continue;
            }
            let seg = &mut y[k + 1..];
            let s = beta * dot(v, seg);
            for (yi, vi) in seg.iter_mut().zip(v) {
                *yi -= s * vi;
            }
        }
    }

    fn norm(&self) -> f64 {
        let n = self.d.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.e[i - 1].abs() } else { 0.0 };
                left + self.d[i].abs() + self.e[i].abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Implicit QL on a symmetric tridiagonal matrix. When `zt` is given its rows
/// are rotated along, so starting from the identity they end up as the
/// eigenvectors of `T`.
pub(crate) fn ql(d: &mut [f64], e: &mut [f64], mut zt: Option<&mut DenseMatrix>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > EPS * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(Error::NonConvergence {
                        iterations: QL_MAX_ITER,
                        last: e[l].abs(),
                        trace: vec![],
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = zt.as_deref_mut() {
                        rotate_rows(z, i, c, s);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= EPS * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn rotate_rows(z: &mut DenseMatrix, i: usize, c: f64, s: f64) {
    let n = z.cols();
    let row_i = z.row(i).to_vec();
    let next = z.row_mut(i + 1);
    let mut new_i = vec![0.0; n];
    for k in 0..n {
        let h = next[k];
        next[k] = s * row_i[k] + c * h;
        new_i[k] = c * row_i[k] - s * h;
    }
    z.row_mut(i).copy_from_slice(&new_i);
}

/// All eigenpairs, unsorted; eigenvector `i` is row `i`.
pub(crate) fn eigen_full(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.rows();
    let tri = Tridiagonal::new(a);
    let mut d = tri.d.clone();
    let mut e = tri.e.clone();
    let mut zt = DenseMatrix::identity(n);
    ql(&mut d, &mut e, Some(&mut zt))?;
    for i in 0..n {
        tri.back_transform(zt.row_mut(i));
    }
    Ok((d, zt))
}

/// All eigenvalues, unsorted, plus the factorisation for later vector work.
pub(crate) fn eigenvalues(a: &DenseMatrix) -> Result<(Vec<f64>, Tridiagonal)> {
    let tri = Tridiagonal::new(a);
    let mut d = tri.d.clone();
    let mut e = tri.e.clone();
    ql(&mut d, &mut e, None)?;
    Ok((d, tri))
}

/// Eigenvectors of `A` for the given eigenvalues of its tridiagonal form,
/// by inverse iteration with reorthogonalisation inside clusters.
pub(crate) fn eigenvectors(tri: &Tridiagonal, lambdas: &[f64]) -> Vec<Vec<f64>> {
    let n = tri.d.len();
    let tnorm = tri.norm().max(f64::MIN_POSITIVE);
    let cluster_tol = 1e-3 * tnorm;
    let mut found: Vec<(f64, Vec<f64>)> = Vec::with_capacity(lambdas.len());
    let mut out = Vec::with_capacity(lambdas.len());
    for (idx, &lambda) in lambdas.iter().enumerate() {
        // Nudge repeated shifts apart so each solve picks a fresh direction.
        let repeats = found
            .iter()
            .filter(|(mu, _)| (mu - lambda).abs() <= 10.0 * EPS * tnorm)
            .count();
        let sigma = lambda + repeats as f64 * 10.0 * EPS * tnorm;
        let solver = ShiftedTridiagonal::new(&tri.d, &tri.e, sigma, EPS * tnorm);

        let mut y = start_vector(n, idx);
        for _ in 0..INVERSE_ITERATIONS {
            y = solver.solve(y);
            for (mu, z) in &found {
                if (mu - lambda).abs() <= cluster_tol {
                    let s = dot(&y, z);
                    for (yi, zi) in y.iter_mut().zip(z) {
                        *yi -= s * zi;
                    }
                }
            }
            let s = norm2(&y);
            for yi in &mut y {
                *yi /= s;
            }
        }
        let mut x = y.clone();
        found.push((lambda, y));
        tri.back_transform(&mut x);
        let s = norm2(&x);
        x.iter_mut().for_each(|v| *v /= s);
        out.push(x);
    }
    out
}

fn start_vector(n: usize, salt: usize) -> Vec<f64> {
    // Small deterministic LCG; any vector not orthogonal to the target works.
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (salt as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

/// LU with partial pivoting of `T − σI`, in the layout of LAPACK `dgttrf`.
struct ShiftedTridiagonal {
    dl: Vec<f64>,
    dd: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedTridiagonal {
    fn new(d: &[f64], e: &[f64], sigma: f64, tiny: f64) -> Self {
        let n = d.len();
        let off = n.saturating_sub(1);
        let mut dl = e[..off].to_vec();
        let mut du = e[..off].to_vec();
        let mut dd: Vec<f64> = d.iter().map(|x| x - sigma).collect();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; off];
        for i in 0..off {
            if dd[i].abs() >= dl[i].abs() {
                let fact = if dd[i] != 0.0 { dl[i] / dd[i] } else { 0.0 };
                dl[i] = fact;
                dd[i + 1] -= fact * du[i];
            } else {
                let fact = dd[i] / dl[i];
                dd[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = dd[i + 1];
                dd[i + 1] = temp - fact * dd[i + 1];
                if i + 1 < off {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        for x in &mut dd {
            if x.abs() < tiny {
                *x = if *x < 0.0 { -tiny } else { tiny };
            }
        }
        Self {
            dl,
            dd,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, mut b: Vec<f64>) -> Vec<f64> {
        let n = self.dd.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.dd[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.dd[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.dd[i];
        }
        // Rescale to keep repeated solves far from overflow.
        let s = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if s > 0.0 && s.is_finite() {
            b.iter_mut().for_each(|x| *x /= s);
        }
        b
    }
}
