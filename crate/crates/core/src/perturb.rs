//! Explicit-constant ℓ∞ perturbation bounds, their preconditions, the ℓ2
//! Wedin baseline, and sign-aligned empirical errors.
//!
//! Non-positive denominators never raise: the affected bound is `+∞` and its
//! precondition is false, so Monte Carlo sweeps keep going.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::balanced_residual;
use crate::matcore::sum::norm2;
use crate::matcore::{coherence, hermitian_dilation, norm_inf, spectral_norm, tau0, DenseMatrix};
use crate::spectra::{
    check_symmetric, eig_sym, eig_sym_top, eigvals_sym, svd, SpectralDecomposition, JACOBI_MAX_DIM,
};

/// Which decomposition the bounds refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Sym,
    Rect,
}

/// `num / den`, or `+∞` when `den` is not positive.
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Smallest gap among `s[0] ≥ … ≥ s[r-1]` and from `s[r-1]` down to zero.
fn min_gap(sorted_desc: &[f64], r: usize) -> f64 {
    (0..r)
        .map(|i| sorted_desc[i] - if i + 1 < r { sorted_desc[i + 1] } else { 0.0 })
        .fold(f64::INFINITY, f64::min)
}

/// For each of the first `r` entries of `spectrum`, the distance to the
/// nearest other entry; the minimum over them. `+∞` if nothing else exists.
fn isolation_radius(spectrum: &[f64], r: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..r {
        for (j, x) in spectrum.iter().enumerate() {
            if j != i {
                best = best.min((spectrum[i] - x).abs());
            }
        }
    }
    best
}

fn check_rank(r: usize, limit: usize) -> Result<()> {
    if r == 0 || r > limit {
        return Err(Error::RankTooLarge { rank: r, limit });
    }
    Ok(())
}

fn check_same_shape(a: &DenseMatrix, e: &DenseMatrix) -> Result<()> {
    if a.shape() != e.shape() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{} but E is {}x{}",
            a.rows(),
            a.cols(),
            e.rows(),
            e.cols()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    Ok(())
}

/// Full spectrum (|λ| order) plus the leading `r` eigenpairs, sharing one
/// decomposition when the matrix is small enough for Jacobi.
fn spectrum_and_top(a: &DenseMatrix, r: usize) -> Result<(Vec<f64>, SpectralDecomposition)> {
    if a.rows() <= JACOBI_MAX_DIM {
        let full = eig_sym(a)?;
        let top = full.truncate(r)?;
        Ok((full.values, top))
    } else {
        Ok((eigvals_sym(a)?, eig_sym_top(a, r)?))
    }
}

/// Scalars entering the symmetric bounds.
#[derive(Debug, Clone)]
pub struct SymmetricQuantities {
    pub d: usize,
    pub r: usize,
    /// Leading `r` eigenvectors of `A` by |λ|.
    pub v: DenseMatrix,
    /// All eigenvalues of `A` in |λ| order.
    pub spectrum: Vec<f64>,
    pub mu: f64,
    pub tau: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub lambda_r: f64,
    pub e_spectral: f64,
    pub delta: f64,
    pub gamma0: f64,
}

impl SymmetricQuantities {
    /// `delta` overrides the isolation radius read off the spectrum of `A`.
    pub fn new(a: &DenseMatrix, e: &DenseMatrix, r: usize, delta: Option<f64>) -> Result<Self> {
        check_same_shape(a, e)?;
        check_symmetric(a)?;
        check_symmetric(e)?;
        let d = a.rows();
        check_rank(r, d)?;
        let (spectrum, top) = spectrum_and_top(a, r)?;
        let v = top.vectors.clone();
        let residual = a.sub(&top.reconstruct());
        let e_eigs = eigvals_sym(e)?;
        let magnitudes: Vec<f64> = spectrum.iter().map(|x| x.abs()).collect();
        Ok(Self {
            d,
            r,
            mu: coherence(&v)?,
            tau: norm_inf(e)?,
            kappa: (d as f64).sqrt() * e.matmul(&v).max_abs(),
            epsilon: norm_inf(&residual)?,
            lambda_r: magnitudes[r - 1],
            e_spectral: e_eigs.first().map_or(0.0, |x| x.abs()),
            delta: delta.unwrap_or_else(|| isolation_radius(&spectrum, r)),
            gamma0: min_gap(&magnitudes, r),
            v,
            spectrum,
        })
    }

    fn rf(&self) -> f64 {
        self.r as f64
    }

    /// `|λr| − ε`.
    pub fn gap(&self) -> f64 {
        self.lambda_r - self.epsilon
    }

    /// `8(1+rμ)κ/(|λr| − ε)`.
    pub fn omega(&self) -> f64 {
        ratio(8.0 * (1.0 + self.rf() * self.mu) * self.kappa, self.gap())
    }

    pub fn precond_qbar(&self) -> bool {
        let r = self.rf();
        self.gap() > 4.0 * r * self.mu * (self.tau + 2.0 * r * self.kappa)
    }

    pub fn precond_bulk(&self) -> bool {
        self.precond_qbar() && self.rf() * self.omega() < 0.5
    }

    pub fn precond_match(&self) -> bool {
        let r = self.rf();
        let need = (3.0 * self.tau)
            .max(64.0 * (1.0 + r * self.mu) * r.powf(1.5) * self.mu.sqrt() * self.kappa);
        self.gap() > need
    }

    pub fn precond_indiv(&self) -> bool {
        self.precond_bulk() && self.delta > self.e_spectral && self.precond_match()
    }

    /// `2√μ·ωr/√d`.
    pub fn bound_bulk(&self) -> f64 {
        2.0 * self.mu.sqrt() * self.omega() * self.rf() / (self.d as f64).sqrt()
    }

    /// `48(1+rμ)r^{5/2}√μκ/((|λr|−ε)√d) + 4r^{3/2}√μ‖E‖2/(δ√d)`.
    pub fn bound_indiv(&self) -> f64 {
        let r = self.rf();
        let sd = (self.d as f64).sqrt();
        let smu = self.mu.sqrt();
        let first = ratio(48.0 * (1.0 + r * self.mu) * r.powf(2.5) * smu * self.kappa, self.gap() * sd);
        let second = ratio(4.0 * r.powf(1.5) * smu * self.e_spectral, self.delta * sd);
        first + second
    }

    /// `2√2‖E‖2/γ0` and whether `γ0 ≥ 2‖E‖2`.
    pub fn bound_l2_wedin(&self) -> (f64, bool) {
        wedin(self.e_spectral, self.gamma0)
    }
}

fn wedin(e_spectral: f64, gamma0: f64) -> (f64, bool) {
    let valid = gamma0 > 0.0 && gamma0 >= 2.0 * e_spectral;
    (ratio(2.0 * std::f64::consts::SQRT_2 * e_spectral, gamma0), valid)
}

/// Scalars entering the rectangular bounds.
#[derive(Debug, Clone)]
pub struct RectQuantities {
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    /// Leading `r` singular values.
    pub sigma: Vec<f64>,
    pub mu0: f64,
    pub tau0: f64,
    pub kappa0: f64,
    pub epsilon0: f64,
    pub e_spectral: f64,
    pub delta0: f64,
    pub gamma0: f64,
}

/// Rectangular bounds on the left and right singular vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectBound {
    pub bound_u: f64,
    pub bound_v: f64,
    pub precond: bool,
}

impl RectQuantities {
    /// `delta0` overrides the isolation radius read off the singular values.
    pub fn new(a: &DenseMatrix, e: &DenseMatrix, r: usize, delta0: Option<f64>) -> Result<Self> {
        check_same_shape(a, e)?;
        let (d1, d2) = a.shape();
        check_rank(r, d1.min(d2))?;
        let dec = svd(a, r)?;
        // Dilation spectrum {±σ_i} plus |d1 − d2| zeros, in descending order;
        // σ_i sits at index i.
        let mut dil = eigvals_sym(&hermitian_dilation(a))?;
        dil.sort_by(|x, y| y.total_cmp(x));
        let singular: Vec<f64> = dil.iter().take(d1.min(d2)).map(|x| x.max(0.0)).collect();
        Self::assemble(a, e, r, dec.u, dec.v, dec.sigma, &dil, &singular, spectral_norm(e)?, delta0)
    }

    /// The same quantities for a symmetric pair, read off its eigenpairs:
    /// `σ_i = |λ_i|`, `u_i = sign(λ_i)v_i`.
    fn from_symmetric(a: &DenseMatrix, e: &DenseMatrix, s: &SymmetricQuantities, delta0: Option<f64>) -> Result<Self> {
        let r = s.r;
        let lambdas = &s.spectrum[..r];
        let mut u = s.v.clone();
        for (j, l) in lambdas.iter().enumerate() {
            if *l < 0.0 {
                u.scale_col(j, -1.0);
            }
        }
        let sigma: Vec<f64> = lambdas.iter().map(|x| x.abs()).collect();
        let singular: Vec<f64> = s.spectrum.iter().map(|x| x.abs()).collect();
        let mut dil: Vec<f64> = singular.iter().flat_map(|x| [*x, -*x]).collect();
        dil.sort_by(|x, y| y.total_cmp(x));
        Self::assemble(a, e, r, u, s.v.clone(), sigma, &dil, &singular, s.e_spectral, delta0)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        a: &DenseMatrix,
        e: &DenseMatrix,
        r: usize,
        u: DenseMatrix,
        v: DenseMatrix,
        sigma: Vec<f64>,
        dilation_spectrum: &[f64],
        singular: &[f64],
        e_spectral: f64,
        delta0: Option<f64>,
    ) -> Result<Self> {
        let (d1, d2) = a.shape();
        let us = DenseMatrix::from_fn(d1, r, |i, j| u[(i, j)] * sigma[j]);
        let residual = a.sub(&us.matmul_t(&v));
        let kappa0 = ((d1 as f64).sqrt() * e.matmul(&v).max_abs())
            .max((d2 as f64).sqrt() * e.t_matmul(&u).max_abs());
        Ok(Self {
            d1,
            d2,
            r,
            mu0: coherence(&u)?.max(coherence(&v)?),
            tau0: tau0(e)?,
            kappa0,
            epsilon0: balanced_residual(&residual)?,
            e_spectral,
            delta0: delta0.unwrap_or_else(|| isolation_radius(dilation_spectrum, r)),
            gamma0: min_gap(singular, r),
            u,
            v,
            sigma,
        })
    }

    fn rf(&self) -> f64 {
        self.r as f64
    }

    /// `σr − ε0`.
    pub fn gap(&self) -> f64 {
        self.sigma[self.r - 1] - self.epsilon0
    }

    /// `8(1+rμ0)κ0/(3(σr − ε0))`.
    pub fn omega0(&self) -> f64 {
        ratio(8.0 * (1.0 + self.rf() * self.mu0) * self.kappa0, 3.0 * self.gap())
    }

    pub fn precond_bulk(&self) -> bool {
        let r = self.rf();
        self.gap() > 16.0 * r * self.mu0 * (self.tau0 + r * self.kappa0)
    }

    pub fn precond_match(&self) -> bool {
        let r = self.rf();
        let second = 64.0 * r.powf(1.5) * self.mu0.sqrt() * (1.0 + r * self.mu0) * self.kappa0;
        self.precond_bulk() && self.gap() > second
    }

    pub fn precond_indiv(&self) -> bool {
        self.precond_match() && self.delta0 > 2.0 * self.e_spectral
    }

    /// Weighted-norm bound `6√μ0·rω0` on the dilated frame.
    fn bulk_weighted(&self) -> f64 {
        6.0 * self.mu0.sqrt() * self.rf() * self.omega0()
    }

    /// `107r^{5/2}√μ0(1+rμ0)κ0/(σr−ε0) + 12r^{3/2}√μ0‖E‖2/δ0`.
    pub fn indiv_weighted(&self) -> f64 {
        let r = self.rf();
        let smu = self.mu0.sqrt();
        ratio(107.0 * r.powf(2.5) * smu * (1.0 + r * self.mu0) * self.kappa0, self.gap())
            + ratio(12.0 * r.powf(1.5) * smu * self.e_spectral, self.delta0)
    }

    /// Per-side bounds. Dilated eigenvectors are `(u; v)/√2`, so a weighted
    /// bound `B` on them gives `√2·B/√d1` on `u` and `√2·B/√d2` on `v`.
    pub fn bound_indiv(&self) -> RectBound {
        let b = std::f64::consts::SQRT_2 * self.indiv_weighted();
        RectBound {
            bound_u: b / (self.d1 as f64).sqrt(),
            bound_v: b / (self.d2 as f64).sqrt(),
            precond: self.precond_indiv(),
        }
    }

    pub fn bound_bulk(&self) -> RectBound {
        let b = std::f64::consts::SQRT_2 * self.bulk_weighted();
        RectBound {
            bound_u: b / (self.d1 as f64).sqrt(),
            bound_v: b / (self.d2 as f64).sqrt(),
            precond: self.precond_bulk() && self.rf() * self.omega0() < 0.5,
        }
    }

    pub fn bound_l2_wedin(&self) -> (f64, bool) {
        wedin(self.e_spectral, self.gamma0)
    }
}

/// Bound on `‖V̄ − V‖max` and its precondition.
pub fn bound_sym_bulk(a: &DenseMatrix, e: &DenseMatrix, r: usize) -> Result<(f64, bool)> {
    let q = SymmetricQuantities::new(a, e, r, None)?;
    Ok((q.bound_bulk(), q.precond_bulk()))
}

/// Bound on `max_i min_η ‖ηṽ_i − v_i‖∞` and its precondition.
pub fn bound_sym_indiv(a: &DenseMatrix, e: &DenseMatrix, r: usize, delta: Option<f64>) -> Result<(f64, bool)> {
    let q = SymmetricQuantities::new(a, e, r, delta)?;
    Ok((q.bound_indiv(), q.precond_indiv()))
}

pub fn bound_rect(a: &DenseMatrix, e: &DenseMatrix, r: usize, delta0: Option<f64>) -> Result<RectBound> {
    Ok(RectQuantities::new(a, e, r, delta0)?.bound_indiv())
}

/// `2√2‖E‖2/γ0` over singular values, with the validity flag `γ0 ≥ 2‖E‖2`.
pub fn bound_l2_wedin(a: &DenseMatrix, e: &DenseMatrix, r: usize) -> Result<(f64, bool)> {
    Ok(RectQuantities::new(a, e, r, None)?.bound_l2_wedin())
}

fn column_errors(vtrue: &DenseMatrix, vhat: &DenseMatrix, norm: fn(&[f64]) -> f64) -> Result<f64> {
    if vtrue.shape() != vhat.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} versus {}x{}",
            vtrue.rows(),
            vtrue.cols(),
            vhat.rows(),
            vhat.cols()
        )));
    }
    let mut worst = 0.0f64;
    for j in 0..vtrue.cols() {
        let (t, h) = (vtrue.col(j), vhat.col(j));
        let plus: Vec<f64> = h.iter().zip(&t).map(|(x, y)| x - y).collect();
        let minus: Vec<f64> = h.iter().zip(&t).map(|(x, y)| -x - y).collect();
        worst = worst.max(norm(&plus).min(norm(&minus)));
    }
    Ok(worst)
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `max_i min_{η=±1} ‖ηv̂_i − v_i‖∞`.
pub fn empirical_err(vtrue: &DenseMatrix, vhat: &DenseMatrix) -> Result<f64> {
    column_errors(vtrue, vhat, sup)
}

/// `max_i min_{η=±1} ‖ηv̂_i − v_i‖2`.
pub fn empirical_err_l2(vtrue: &DenseMatrix, vhat: &DenseMatrix) -> Result<f64> {
    column_errors(vtrue, vhat, norm2)
}

/// Everything the bound calculators know about one instance.
///
/// In `rect` mode the unsubscripted fields repeat their rectangular
/// counterparts (`mu = mu0`, `delta = delta0`, …). Infinite values serialise
/// as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub mode: BoundMode,
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub mu: f64,
    pub mu0: f64,
    pub tau: f64,
    pub tau0: f64,
    pub kappa: f64,
    pub kappa0: f64,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub gamma0: f64,
    pub delta: f64,
    pub delta0: f64,
    pub omega: f64,
    pub omega0: f64,
    #[serde(rename = "E_spectral")]
    pub e_spectral: f64,
    pub bound_bulk: f64,
    pub bound_indiv: f64,
    pub bound_indiv_u: f64,
    pub bound_indiv_v: f64,
    pub bound_l2_wedin: f64,
    pub wedin_valid: bool,
    pub precond_bulk: bool,
    pub precond_indiv: bool,
    pub precond_match: bool,
    pub err_empirical_u: f64,
    pub err_empirical_v: f64,
    pub err_l2_empirical: f64,
}

impl PerturbationReport {
    /// `delta` overrides `δ` in `sym` mode and `δ0` in `rect` mode.
    pub fn compute(a: &DenseMatrix, e: &DenseMatrix, r: usize, mode: BoundMode, delta: Option<f64>) -> Result<Self> {
        match mode {
            BoundMode::Sym => Self::symmetric(a, e, r, delta),
            BoundMode::Rect => Self::rectangular(a, e, r, delta),
        }
    }

    fn symmetric(a: &DenseMatrix, e: &DenseMatrix, r: usize, delta: Option<f64>) -> Result<Self> {
        let s = SymmetricQuantities::new(a, e, r, delta)?;
        let rect = RectQuantities::from_symmetric(a, e, &s, None)?;
        let tilde = eig_sym_top(&a.add(e).symmetrize(), r)?.vectors;
        let err = empirical_err(&s.v, &tilde)?;
        let (wedin_bound, wedin_valid) = s.bound_l2_wedin();
        let indiv = s.bound_indiv();
        Ok(Self {
            mode: BoundMode::Sym,
            d1: s.d,
            d2: s.d,
            r,
            mu: s.mu,
            mu0: rect.mu0,
            tau: s.tau,
            tau0: rect.tau0,
            kappa: s.kappa,
            kappa0: rect.kappa0,
            epsilon: s.epsilon,
            epsilon0: rect.epsilon0,
            gamma0: s.gamma0,
            delta: s.delta,
            delta0: rect.delta0,
            omega: s.omega(),
            omega0: rect.omega0(),
            e_spectral: s.e_spectral,
            bound_bulk: s.bound_bulk(),
            bound_indiv: indiv,
            bound_indiv_u: indiv,
            bound_indiv_v: indiv,
            bound_l2_wedin: wedin_bound,
            wedin_valid,
            precond_bulk: s.precond_bulk(),
            precond_indiv: s.precond_indiv(),
            precond_match: s.precond_match(),
            err_empirical_u: err,
            err_empirical_v: err,
            err_l2_empirical: empirical_err_l2(&s.v, &tilde)?,
        })
    }

    fn rectangular(a: &DenseMatrix, e: &DenseMatrix, r: usize, delta0: Option<f64>) -> Result<Self> {
        let q = RectQuantities::new(a, e, r, delta0)?;
        let tilde = svd(&a.add(e), r)?;
        let indiv = q.bound_indiv();
        let bulk = q.bound_bulk();
        let (wedin_bound, wedin_valid) = q.bound_l2_wedin();
        Ok(Self {
            mode: BoundMode::Rect,
            d1: q.d1,
            d2: q.d2,
            r,
            mu: q.mu0,
            mu0: q.mu0,
            tau: q.tau0,
            tau0: q.tau0,
            kappa: q.kappa0,
            kappa0: q.kappa0,
            epsilon: q.epsilon0,
            epsilon0: q.epsilon0,
            gamma0: q.gamma0,
            delta: q.delta0,
            delta0: q.delta0,
            omega: q.omega0(),
            omega0: q.omega0(),
            e_spectral: q.e_spectral,
            bound_bulk: bulk.bound_u.max(bulk.bound_v),
            bound_indiv: indiv.bound_u.max(indiv.bound_v),
            bound_indiv_u: indiv.bound_u,
            bound_indiv_v: indiv.bound_v,
            bound_l2_wedin: wedin_bound,
            wedin_valid,
            precond_bulk: bulk.precond,
            precond_indiv: indiv.precond,
            precond_match: q.precond_match(),
            err_empirical_u: empirical_err(&q.u, &tilde.u)?,
            err_empirical_v: empirical_err(&q.v, &tilde.v)?,
            err_l2_empirical: empirical_err_l2(&q.u, &tilde.u)?.max(empirical_err_l2(&q.v, &tilde.v)?),
        })
    }
}
