//! The rotated eigenbasis `V̄` built from a solution `Q̄` of
//!
//! ```text
//! Q̄ L̄1 − L̄2 Q̄ = H − Q̄ Hᵀ Q̄
//! ```
//!
//! where `H = (I−VVᵀ)EV`, `L̄1 = Λ1 + VᵀEV` and
//! `L̄2 = (A − A_r) + (I−VVᵀ)E(I−VVᵀ)`. The equation is solved by the
//! fixed-point iteration `Q̄ ← T⁻¹(H − Q̄HᵀQ̄)` with `T(Q) = QL̄1 − L̄2Q`.
//! `span(V̄)` is then an invariant subspace of `A + E`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{coherence, norm_inf, DenseMatrix, Lu};
use crate::spectra::{
    check_symmetric, eig_sym, eig_sym_top, matrix_inverse_and_sqrt, SpectralDecomposition, SpectralMode,
};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

const SEPARATION_TOL: f64 = 1e-10;

/// Solves `Q L1 − L2 Q = C` for symmetric `L1` (r×r).
///
/// `L1` is diagonalised once; each eigenvalue `θ_i` then gives a `d×d`
/// system `(θ_i I − L2) y_i = c_i` factorised by LU.
pub struct SylvesterSolver {
    w: DenseMatrix,
    factors: Vec<Lu>,
}

impl SylvesterSolver {
    pub fn new(l1: &DenseMatrix, l2: &DenseMatrix) -> Result<Self> {
        if !l2.is_square() || l1.is_empty() || l2.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "Sylvester operator needs square blocks, got {}x{} and {}x{}",
                l1.rows(),
                l1.cols(),
                l2.rows(),
                l2.cols()
            )));
        }
        let eig1 = eig_sym(l1)?;
        let scale = l1.max_abs().max(l2.max_abs()).max(f64::MIN_POSITIVE);

        if l2.is_symmetric(1e-12) {
            let spectrum2 = eig_sym(l2)?.values;
            for &theta in &eig1.values {
                if let Some(&mu) = spectrum2
                    .iter()
                    .min_by(|a, b| (*a - theta).abs().total_cmp(&(*b - theta).abs()))
                {
                    if (theta - mu).abs() <= SEPARATION_TOL * scale {
                        return Err(Error::Singular(format!(
                            "eigenvalue {theta:e} of L1 collides with eigenvalue {mu:e} of L2"
                        )));
                    }
                }
            }
        }

        let d = l2.rows();
        let mut factors = Vec::with_capacity(eig1.len());
        for &theta in &eig1.values {
            let shifted = DenseMatrix::identity(d).scale(theta).sub(l2);
            let lu = Lu::new(&shifted).map_err(|e| match e {
                Error::Singular(msg) => {
                    Error::Singular(format!("theta = {theta:e} is (nearly) in the spectrum of L2: {msg}"))
                }
                other => other,
            })?;
            factors.push(lu);
        }
        Ok(Self {
            w: eig1.vectors,
            factors,
        })
    }

    pub fn solve(&self, c: &DenseMatrix) -> Result<DenseMatrix> {
        assert_eq!(c.cols(), self.w.rows());
        let cw = c.matmul(&self.w);
        let mut y = DenseMatrix::zeros(c.rows(), c.cols());
        for (i, lu) in self.factors.iter().enumerate() {
            y.set_col(i, &lu.solve(&cw.col(i)));
        }
        DenseMatrix::new(y.rows(), y.cols(), y.matmul_t(&self.w).into_vec())
            .map_err(|_| Error::Singular("Sylvester solution overflowed".into()))
    }
}

/// One-shot `Q L1 − L2 Q = C`.
pub fn solve_sylvester(l1: &DenseMatrix, l2: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    if c.rows() != l2.rows() || c.cols() != l1.rows() {
        return Err(Error::DimensionMismatch(format!(
            "C is {}x{}, expected {}x{}",
            c.rows(),
            c.cols(),
            l2.rows(),
            l1.rows()
        )));
    }
    SylvesterSolver::new(l1, l2)?.solve(c)
}

/// The data of one symmetric perturbation instance and the derived blocks.
#[derive(Debug, Clone)]
pub struct FixpointProblem {
    pub a: DenseMatrix,
    pub e: DenseMatrix,
    pub r: usize,
    /// Leading `r` eigenvectors of `A` by |λ|.
    pub v: DenseMatrix,
    pub lambda1: Vec<f64>,
    pub h: DenseMatrix,
    pub l1: DenseMatrix,
    pub l2: DenseMatrix,
    /// `μ(V)`.
    pub mu: f64,
    /// `‖E‖∞`.
    pub tau: f64,
    /// `√d‖EV‖max`.
    pub kappa: f64,
    /// `‖A − A_r‖∞`.
    pub epsilon: f64,
    /// `|λ_r|`.
    pub lambda_r: f64,
}

impl FixpointProblem {
    pub fn new(a: &DenseMatrix, e: &DenseMatrix, r: usize) -> Result<Self> {
        if a.shape() != e.shape() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{} but E is {}x{}",
                a.rows(),
                a.cols(),
                e.rows(),
                e.cols()
            )));
        }
        let d = a.rows();
        if r == 0 || r > d {
            return Err(Error::RankTooLarge { rank: r, limit: d });
        }
        check_symmetric(e)?;
        let top = eig_sym_top(a, r)?;
        let v = top.vectors;
        let lambda1 = top.values;
        let a_r = SpectralDecomposition {
            values: lambda1.clone(),
            vectors: v.clone(),
            mode: SpectralMode::Symmetric,
        }
        .reconstruct();

        let ev = e.matmul(&v);
        let h = project_out(&v, &ev);
        let l1 = DenseMatrix::from_diag(&lambda1).add(&v.t_matmul(&ev)).symmetrize();
        let pe = project_out(&v, &e.symmetrize());
        let pep = project_out(&v, &pe.transpose());
        let l2 = a.sub(&a_r).add(&pep).symmetrize();

        let sqrt_d = (d as f64).sqrt();
        Ok(Self {
            mu: coherence(&v)?,
            tau: norm_inf(e)?,
            kappa: sqrt_d * ev.max_abs(),
            epsilon: norm_inf(&a.sub(&a_r))?,
            lambda_r: lambda1.iter().fold(f64::INFINITY, |m, x| m.min(x.abs())),
            a: a.clone(),
            e: e.clone(),
            r,
            v,
            lambda1,
            h,
            l1,
            l2,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// `X − V(VᵀX)`.
    pub fn project_perp(&self, x: &DenseMatrix) -> DenseMatrix {
        project_out(&self.v, x)
    }

    /// `8(1+rμ)κ/(|λr| − ε)`, infinite when the gap is not positive.
    pub fn omega(&self) -> f64 {
        let gap = self.lambda_r - self.epsilon;
        if gap <= 0.0 {
            return f64::INFINITY;
        }
        8.0 * (1.0 + self.r as f64 * self.mu) * self.kappa / gap
    }

    /// `|λr| − ε > 4rμ(τ + 2rκ)`, under which `‖Q̄‖max ≤ ω/√d`.
    pub fn qbar_precondition(&self) -> bool {
        let r = self.r as f64;
        self.lambda_r - self.epsilon > 4.0 * r * self.mu * (self.tau + 2.0 * r * self.kappa)
    }

    /// `|λr| − ε > max{3τ, 64(1+rμ)r^{3/2}√μ·κ}`, under which `span(V̄)` is
    /// spanned by the leading `r` eigenvectors of `A + E`.
    pub fn match_precondition(&self) -> bool {
        let r = self.r as f64;
        let rhs = (3.0 * self.tau)
            .max(64.0 * (1.0 + r * self.mu) * r.powf(1.5) * self.mu.sqrt() * self.kappa);
        self.lambda_r - self.epsilon > rhs
    }

    /// `(1+rμ)κ/√d`, an upper bound on `‖H‖max`.
    pub fn h_bound(&self) -> f64 {
        (1.0 + self.r as f64 * self.mu) * self.kappa / (self.dim() as f64).sqrt()
    }

    /// `4‖H‖max·η/β²` with `η = (1+rμ)κr√d` and the lower bound
    /// `β ≥ |λr| − 3rμ(τ + rκ) − ε`; infinite when that bound is not positive.
    pub fn contraction_bound(&self) -> f64 {
        let r = self.r as f64;
        let beta = self.lambda_r - 3.0 * r * self.mu * (self.tau + r * self.kappa) - self.epsilon;
        if beta <= 0.0 {
            return f64::INFINITY;
        }
        let eta = (1.0 + r * self.mu) * self.kappa * r * (self.dim() as f64).sqrt();
        4.0 * self.h.max_abs() * eta / (beta * beta)
    }

    /// `‖Q̄L̄1 − L̄2Q̄ − H + Q̄HᵀQ̄‖max`.
    pub fn equation_residual(&self, q: &DenseMatrix) -> f64 {
        let lhs = q.matmul(&self.l1).sub(&self.l2.matmul(q));
        let rhs = self.h.sub(&q.matmul(&self.h.t_matmul(q)));
        lhs.sub(&rhs).max_abs()
    }
}

fn project_out(v: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
    x.sub(&v.matmul(&v.t_matmul(x)))
}

/// Converged fixed point and the rotated basis built from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixpointSolution {
    pub qbar: DenseMatrix,
    pub vbar: DenseMatrix,
    pub iterations: usize,
    /// Max-norm change of the final iterate.
    pub residual: f64,
    /// Max-norm residual of the quadratic equation at the final iterate.
    pub equation_residual: f64,
    /// `‖(I − V̄V̄ᵀ)(A+E)V̄‖max`.
    pub block_offdiag: f64,
    pub omega: f64,
    pub qbar_precondition: bool,
    /// Max-norm change of every iterate.
    pub trace: Vec<f64>,
}

/// Runs the fixed-point iteration from `Q̄ = 0` until the equation residual
/// is at most `tol·‖H‖max`.
pub fn solve_qbar(p: &FixpointProblem, tol: f64, max_iter: usize) -> Result<FixpointSolution> {
    if !p.qbar_precondition() {
        log::warn!(
            "gap |lambda_r| - eps = {:e} is below 4 r mu (tau + 2 r kappa); the iteration may not contract",
            p.lambda_r - p.epsilon
        );
    }
    let solver = SylvesterSolver::new(&p.l1, &p.l2)?;
    let target = tol * p.h.max_abs();
    let mut q = DenseMatrix::zeros(p.dim(), p.r);
    let mut trace = Vec::new();
    for it in 1..=max_iter {
        let rhs = p.h.sub(&q.matmul(&p.h.t_matmul(&q)));
        let next = p.project_perp(&solver.solve(&rhs)?);
        let change = next.sub(&q).max_abs();
        trace.push(change);
        q = next;
        let equation_residual = p.equation_residual(&q);
        if equation_residual <= target {
            let vbar = build_vbar(&q, &p.v)?;
            let tilde = p.a.add(&p.e);
            return Ok(FixpointSolution {
                block_offdiag: block_offdiag(&tilde, &vbar),
                qbar: q,
                vbar,
                iterations: it,
                residual: change,
                equation_residual,
                omega: p.omega(),
                qbar_precondition: p.qbar_precondition(),
                trace,
            });
        }
        if !change.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: trace.len(),
        last: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

/// `V̄ = (V + Q̄)(I + Q̄ᵀQ̄)^{-1/2}`.
pub fn build_vbar(qbar: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    if qbar.shape() != v.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Qbar is {}x{} but V is {}x{}",
            qbar.rows(),
            qbar.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let gram = qbar.t_matmul(qbar).add_identity(1.0).symmetrize();
    let root = matrix_inverse_and_sqrt(&gram)?;
    Ok(v.add(qbar).matmul(&root.inv_sqrt))
}

/// `‖(I − V̄V̄ᵀ) M V̄‖max`.
pub fn block_offdiag(m: &DenseMatrix, vbar: &DenseMatrix) -> f64 {
    project_out(vbar, &m.matmul(vbar)).max_abs()
}
