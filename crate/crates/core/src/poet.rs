//! Generic POET: subtract a pilot low-rank part, threshold the remainder in
//! correlation units, and add the low-rank part back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{check_orthonormal, coherence, DenseMatrix, Lu};
use crate::robust::DataPanel;
use crate::spectra::{eig_sym_top, eigvals_sym, matrix_inverse_and_sqrt};

/// Pilot estimates `(Σ̂, Λ̂, V̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotTrio {
    pub sigma_hat: DenseMatrix,
    pub lambda_hat: Vec<f64>,
    pub v_hat: DenseMatrix,
}

impl PilotTrio {
    pub fn new(sigma_hat: DenseMatrix, lambda_hat: Vec<f64>, v_hat: DenseMatrix) -> Result<Self> {
        let d = sigma_hat.rows();
        if !sigma_hat.is_square() || v_hat.rows() != d || v_hat.cols() != lambda_hat.len() {
            return Err(Error::DimensionMismatch(format!(
                "pilot shapes: sigma {}x{}, v {}x{}, {} eigenvalues",
                sigma_hat.rows(),
                sigma_hat.cols(),
                v_hat.rows(),
                v_hat.cols(),
                lambda_hat.len()
            )));
        }
        if lambda_hat.iter().any(|l| !(*l > 0.0)) || lambda_hat.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Degenerate(format!(
                "pilot eigenvalues must be positive and descending, got {lambda_hat:?}"
            )));
        }
        check_orthonormal(&v_hat)?;
        Ok(Self {
            sigma_hat,
            lambda_hat,
            v_hat,
        })
    }

    /// `Σ̂` with its own leading `r` eigenpairs.
    pub fn from_covariance(sigma_hat: DenseMatrix, r: usize) -> Result<Self> {
        let top = eig_sym_top(&sigma_hat, r)?;
        Self::new(sigma_hat, top.values, top.vectors)
    }

    /// `Σ̂` with its leading `r` eigenvalues and eigenvectors taken from
    /// another matrix.
    pub fn with_vectors_from(sigma_hat: DenseMatrix, vectors_of: &DenseMatrix, r: usize) -> Result<Self> {
        let values = eig_sym_top(&sigma_hat, r)?.values;
        let vectors = eig_sym_top(vectors_of, r)?.vectors;
        Self::new(sigma_hat, values, vectors)
    }

    pub fn rank(&self) -> usize {
        self.lambda_hat.len()
    }

    /// `V̂Λ̂V̂ᵀ`.
    pub fn low_rank(&self) -> DenseMatrix {
        let scaled = DenseMatrix::from_fn(self.v_hat.rows(), self.rank(), |i, j| {
            self.v_hat[(i, j)] * self.lambda_hat[j]
        });
        scaled.matmul_t(&self.v_hat).symmetrize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shrink {
    Hard,
    #[default]
    Soft,
}

impl Shrink {
    /// Shrinks `x` against threshold `t`; values below `t` in magnitude vanish.
    pub fn apply(self, x: f64, t: f64) -> f64 {
        if x.abs() < t {
            return 0.0;
        }
        match self {
            Shrink::Hard => x,
            Shrink::Soft => x.signum() * (x.abs() - t).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoetConfig {
    pub r: usize,
    /// `C` in `τ = C·√(log d / n)`.
    pub tau_scale: f64,
    pub shrink: Shrink,
    /// Exponent for the sparsity diagnostic `m_d`.
    pub q: f64,
    /// Use `w_n = √(log d / n) + 1/√d` instead of `√(log d / n)`.
    pub use_wn: bool,
    /// Shift a non-positive-definite thresholded `Σ̂_u` by `(|λmin| + 1e-8)I`
    /// before inverting it for the precision metrics.
    pub psd_repair: bool,
}

impl PoetConfig {
    pub fn new(r: usize) -> Self {
        Self {
            r,
            tau_scale: 2.0,
            shrink: Shrink::Soft,
            q: 0.0,
            use_wn: false,
            psd_repair: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_scale > 0.0 && self.tau_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau_scale must be positive, got {}", self.tau_scale)));
        }
        if !(0.0..1.0).contains(&self.q) {
            return Err(Error::InvalidParameter(format!("q must lie in [0, 1), got {}", self.q)));
        }
        Ok(())
    }

    /// The global threshold level for dimension `d` and sample size `n`.
    pub fn tau(&self, d: usize, n: usize) -> f64 {
        let base = ((d as f64).ln() / n as f64).sqrt();
        let rate = if self.use_wn { base + 1.0 / (d as f64).sqrt() } else { base };
        self.tau_scale * rate
    }
}

/// `Σ̂ − V̂Λ̂V̂ᵀ`, symmetrised.
pub fn principal_complement(pilot: &PilotTrio) -> DenseMatrix {
    pilot.sigma_hat.sub(&pilot.low_rank()).symmetrize()
}

/// Thresholds off-diagonal entries at `τ_ij = τ·√(σ_ii σ_jj)`; the diagonal
/// is kept.
pub fn threshold_at(sigma_u: &DenseMatrix, tau: f64, shrink: Shrink) -> Result<DenseMatrix> {
    let d = sigma_u.rows();
    let diag = sigma_u.diag();
    if let Some(i) = diag.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::Degenerate(format!(
            "residual variance {} at index {i} is not positive",
            diag[i]
        )));
    }
    Ok(DenseMatrix::from_fn(d, d, |i, j| {
        let x = sigma_u[(i, j)];
        if i == j {
            x
        } else {
            shrink.apply(x, tau * (diag[i] * diag[j]).sqrt())
        }
    }))
}

/// [`threshold_at`] with `τ` from the configuration.
pub fn correlation_threshold(sigma_u: &DenseMatrix, n: usize, cfg: &PoetConfig) -> Result<DenseMatrix> {
    cfg.validate()?;
    threshold_at(sigma_u, cfg.tau(sigma_u.rows(), n), cfg.shrink)
}

/// Population quantities with their inverses computed once.
#[derive(Debug, Clone)]
pub struct PoetTruth {
    pub sigma: DenseMatrix,
    pub sigma_u: DenseMatrix,
    sigma_inv: DenseMatrix,
    sigma_u_inv: DenseMatrix,
    sigma_inv_sqrt: DenseMatrix,
}

impl PoetTruth {
    pub fn new(sigma: DenseMatrix, sigma_u: DenseMatrix) -> Result<Self> {
        if sigma.shape() != sigma_u.shape() {
            return Err(Error::DimensionMismatch("Σ and Σ_u differ in shape".into()));
        }
        let pd = matrix_inverse_and_sqrt(&sigma)?;
        let pdu = matrix_inverse_and_sqrt(&sigma_u)?;
        Ok(Self {
            sigma_inv: pd.inverse,
            sigma_inv_sqrt: pd.inv_sqrt,
            sigma_u_inv: pdu.inverse,
            sigma,
            sigma_u,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// `‖Σ̂_u^⊤ − Σ_u‖2`.
    pub err_u_spectral: f64,
    /// `‖(Σ̂_u^⊤)⁻¹ − Σ_u⁻¹‖2`; infinite when the estimate is singular.
    pub err_precision_u: f64,
    /// `‖Σ̂^⊤ − Σ‖max`.
    pub err_max: f64,
    /// `d^{-1/2}‖Σ^{-1/2}(Σ̂^⊤ − Σ)Σ^{-1/2}‖F`.
    pub err_relative_frob: f64,
    /// `‖(Σ̂^⊤)⁻¹ − Σ⁻¹‖2`; infinite when the estimate is singular.
    pub err_precision: f64,
    /// `max_i Σ_j |Σ_u,ij|^q`, counting nonzeros when `q = 0`.
    pub m_d: f64,
    pub singular_u: bool,
    pub singular: bool,
    /// Whether the PSD shift was applied before inverting.
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoetResult {
    pub tau: f64,
    pub sigma_u_hat: DenseMatrix,
    pub sigma_u_thresh: DenseMatrix,
    pub low_rank: DenseMatrix,
    pub sigma_final: DenseMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ErrorMetrics>,
}

/// Runs the three POET steps on a pilot built from `x`; `truth` adds the
/// error metrics.
pub fn poet(x: &DataPanel, pilot: &PilotTrio, cfg: &PoetConfig, truth: Option<&PoetTruth>) -> Result<PoetResult> {
    cfg.validate()?;
    let d = x.d();
    if pilot.sigma_hat.rows() != d || pilot.rank() != cfg.r {
        return Err(Error::DimensionMismatch(format!(
            "pilot is {}-dimensional with rank {}, expected {d} and {}",
            pilot.sigma_hat.rows(),
            pilot.rank(),
            cfg.r
        )));
    }
    let sigma_u_hat = principal_complement(pilot);
    let tau = cfg.tau(d, x.n());
    let sigma_u_thresh = threshold_at(&sigma_u_hat, tau, cfg.shrink)?;
    let low_rank = pilot.low_rank();
    let sigma_final = low_rank.add(&sigma_u_thresh);
    let metrics = truth
        .map(|t| error_metrics(&low_rank, &sigma_u_thresh, &sigma_final, t, cfg))
        .transpose()?;
    Ok(PoetResult {
        tau,
        sigma_u_hat,
        sigma_u_thresh,
        low_rank,
        sigma_final,
        metrics,
    })
}

/// Largest |λ| of a symmetric matrix.
fn sym_spectral_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(eigvals_sym(&m.symmetrize())?.first().map_or(0.0, |x| x.abs()))
}

fn inverse(m: &DenseMatrix) -> Option<DenseMatrix> {
    Lu::new(m).and_then(|lu| lu.inverse()).ok()
}

/// `max_i Σ_j |m_ij|^q` with `0^0 := 0`.
pub fn sparsity_level(m: &DenseMatrix, q: f64) -> f64 {
    (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .filter(|x| **x != 0.0)
                .map(|x| if q == 0.0 { 1.0 } else { x.abs().powf(q) })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn error_metrics(
    low_rank: &DenseMatrix,
    sigma_u_thresh: &DenseMatrix,
    sigma_final: &DenseMatrix,
    truth: &PoetTruth,
    cfg: &PoetConfig,
) -> Result<ErrorMetrics> {
    let d = sigma_final.rows();
    if truth.sigma.rows() != d {
        return Err(Error::DimensionMismatch(format!(
            "truth is {}-dimensional, estimate {d}",
            truth.sigma.rows()
        )));
    }
    let (u_for_inverse, final_for_inverse, repaired) = if cfg.psd_repair {
        let lmin = eigvals_sym(sigma_u_thresh)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if lmin <= 0.0 {
            let fixed = sigma_u_thresh.add_identity(lmin.abs() + 1e-8);
            let total = low_rank.add(&fixed);
            (fixed, total, true)
        } else {
            (sigma_u_thresh.clone(), sigma_final.clone(), false)
        }
    } else {
        (sigma_u_thresh.clone(), sigma_final.clone(), false)
    };

    let precision = |est: &DenseMatrix, target: &DenseMatrix| -> Result<(f64, bool)> {
        match inverse(est) {
            Some(inv) => Ok((sym_spectral_norm(&inv.sub(target))?, false)),
            None => Ok((f64::INFINITY, true)),
        }
    };
    let (err_precision_u, singular_u) = precision(&u_for_inverse, &truth.sigma_u_inv)?;
    let (err_precision, singular) = precision(&final_for_inverse, &truth.sigma_inv)?;

    let diff = sigma_final.sub(&truth.sigma);
    let whitened = truth.sigma_inv_sqrt.matmul(&diff).matmul(&truth.sigma_inv_sqrt);
    Ok(ErrorMetrics {
        err_u_spectral: sym_spectral_norm(&sigma_u_thresh.sub(&truth.sigma_u))?,
        err_precision_u,
        err_max: diff.max_abs(),
        err_relative_frob: whitened.frobenius() / (d as f64).sqrt(),
        err_precision,
        m_d: sparsity_level(&truth.sigma_u, cfg.q),
        singular_u,
        singular,
        repaired,
    })
}

/// Diagnostics for the pervasiveness of loadings `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PervasivenessReport {
    pub b_max: f64,
    /// `‖B‖max > 2√(2 ln(2dr))`, well above the Gaussian-loading scale.
    pub b_max_flagged: bool,
    /// Eigenvalues of `BᵀB/d`, descending.
    pub gram_eigenvalues: Vec<f64>,
    /// Consecutive differences of `gram_eigenvalues`, then the last one.
    pub gram_gaps: Vec<f64>,
    /// Coherence of the leading `r` eigenvectors of `BBᵀ + Σ_u`.
    pub mu_v: f64,
    /// Leading `r` eigenvalues of `BBᵀ + Σ_u` divided by `d`.
    pub lambda_over_d: Vec<f64>,
}

pub fn pervasiveness_check(b: &DenseMatrix, sigma_u: &DenseMatrix) -> Result<PervasivenessReport> {
    let (d, r) = b.shape();
    if sigma_u.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "B has {d} rows but Σ_u is {}x{}",
            sigma_u.rows(),
            sigma_u.cols()
        )));
    }
    let df = d as f64;
    let b_max = b.max_abs();
    let mut gram = eigvals_sym(&b.t_matmul(b).scale(1.0 / df))?;
    gram.sort_by(|x, y| y.total_cmp(x));
    let gram_gaps = (0..gram.len())
        .map(|i| gram[i] - gram.get(i + 1).copied().unwrap_or(0.0))
        .collect();
    let sigma = b.matmul_t(b).add(sigma_u).symmetrize();
    let top = eig_sym_top(&sigma, r)?;
    Ok(PervasivenessReport {
        b_max,
        b_max_flagged: b_max > 2.0 * (2.0 * (2.0 * df * r as f64).ln()).sqrt(),
        gram_eigenvalues: gram,
        gram_gaps,
        mu_v: coherence(&top.vectors)?,
        lambda_over_d: top.values.iter().map(|l| l / df).collect(),
    })
}
