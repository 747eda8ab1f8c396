//! Covariance estimators for heavy-tailed panels: sample covariance, the
//! entrywise Huber M-estimator, and marginal and spatial Kendall's tau.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::sum::{pairwise_sum, pairwise_sum_by};
use crate::matcore::DenseMatrix;

/// An `n × d` data matrix, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPanel {
    values: DenseMatrix,
}

impl DataPanel {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    /// Subtracts column means.
    pub fn centered(&self) -> Self {
        let n = self.n() as f64;
        let means: Vec<f64> = (0..self.d())
            .map(|j| pairwise_sum(&self.values.col(j)) / n)
            .collect();
        Self {
            values: DenseMatrix::from_fn(self.n(), self.d(), |t, j| self.values[(t, j)] - means[j]),
        }
    }

    fn products(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.n())
            .map(|t| self.values[(t, i)] * self.values[(t, j)])
            .collect()
    }

    fn require_pairs(&self) -> Result<()> {
        if self.n() < 2 {
            return Err(Error::InvalidParameter(format!(
                "Kendall's tau needs at least 2 observations, got {}",
                self.n()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Sample,
    Huber,
    KendallMarginal,
    KendallSpatial,
}

/// How the Huber truncation level is chosen from `(n, d, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `α = v√(n / log(1/ε))` with `ε = d⁻³`, i.e. `√(nv²/(3 log d))`.
    #[default]
    Confidence,
    /// `α = √(3nv² log d)`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberConfig {
    pub v: f64,
    /// Infinite means plain averaging.
    pub alpha: f64,
    pub epsilon_conf: f64,
    /// Whether `log(1/ε) ≤ n/8`; reported, not enforced.
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<AlphaRule>,
}

impl HuberConfig {
    /// Builds `α` from the rule with `ε = d⁻³`. For `d = 1` the confidence
    /// rule degenerates to `α = ∞`.
    pub fn from_rule(n: usize, d: usize, v: f64, rule: AlphaRule) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("v must be positive and finite, got {v}")));
        }
        let (nf, log_d) = (n as f64, (d as f64).ln());
        let alpha = match rule {
            AlphaRule::Confidence if log_d == 0.0 => f64::INFINITY,
            AlphaRule::Confidence => (nf * v * v / (3.0 * log_d)).sqrt(),
            AlphaRule::Literal => (3.0 * nf * v * v * log_d).sqrt(),
        };
        let epsilon_conf = (d as f64).powi(-3);
        Ok(Self {
            v,
            alpha,
            epsilon_conf,
            valid: 3.0 * log_d <= nf / 8.0,
            rule: Some(rule),
        })
    }

    /// A caller-chosen `α`; `v` and `ε` are echoed only.
    pub fn with_alpha(v: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            v,
            alpha,
            epsilon_conf: f64::NAN,
            valid: true,
            rule: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub sigma_hat: DenseMatrix,
    pub method: EstimatorKind,
    pub centered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub huber: Option<HuberConfig>,
}

fn symmetric_from_upper(d: usize, mut entry: impl FnMut(usize, usize) -> f64) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let x = entry(i, j);
            out.set(i, j, x);
            out.set(j, i, x);
        }
    }
    out
}

/// `XᵀX/n`, after subtracting column means when `center` is set.
pub fn sample_cov(x: &DataPanel, center: bool) -> CovarianceEstimate {
    let panel = if center { x.centered() } else { x.clone() };
    let n = panel.n() as f64;
    let xt = panel.values.transpose();
    let sigma_hat = symmetric_from_upper(panel.d(), |i, j| {
        crate::matcore::sum::dot(xt.row(i), xt.row(j)) / n
    });
    CovarianceEstimate {
        sigma_hat,
        method: EstimatorKind::Sample,
        centered: center,
        huber: None,
    }
}

/// `Σ_t clamp(z_t − μ, −α, α)`, non-increasing in `μ`.
fn psi_sum(z: &[f64], mu: f64, alpha: f64) -> f64 {
    pairwise_sum_by(z.len(), |t| (z[t] - mu).clamp(-alpha, alpha))
}

/// Minimiser of `Σ_t l_α(z_t − μ)` with the Huber loss
/// `l_α(x) = x²` for `|x| ≤ α` and `2α|x| − α²` beyond.
///
/// The stationarity condition is solved by bisection; when it holds on a
/// whole interval the midpoint is returned.
pub fn huber_entry(z: &[f64], alpha: f64) -> f64 {
    assert!(!z.is_empty(), "huber_entry needs at least one value");
    assert!(alpha > 0.0, "alpha must be positive");
    if alpha == f64::INFINITY {
        return pairwise_sum(z) / z.len() as f64;
    }
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return lo;
    }
    let scale = lo.abs().max(hi.abs());
    let width = 1e-12 * (1.0 + scale);

    // Largest μ with ψ(μ) > 0, and smallest μ with ψ(μ) < 0.
    let left = bisect(lo, hi, width, |mu| psi_sum(z, mu, alpha) > 0.0);
    let right = bisect(lo, hi, width, |mu| psi_sum(z, mu, alpha) >= 0.0);
    0.5 * (left + right)
}

/// Boundary of `{μ : pred(μ)}` inside `[lo, hi]`, assuming the predicate is
/// true then false as `μ` grows.
fn bisect(mut lo: f64, mut hi: f64, width: f64, pred: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Entrywise Huber estimate on the products `{X_ti X_tj}`.
pub fn huber_cov(x: &DataPanel, cfg: &HuberConfig) -> CovarianceEstimate {
    let sigma_hat = symmetric_from_upper(x.d(), |i, j| huber_entry(&x.products(i, j), cfg.alpha));
    CovarianceEstimate {
        sigma_hat,
        method: EstimatorKind::Huber,
        centered: false,
        huber: Some(*cfg),
    }
}

/// Heuristic `v`: the largest sample standard deviation of the products
/// `X_ti X_tj` over all `(i, j)`. Zero for a single observation.
pub fn plugin_v(x: &DataPanel) -> f64 {
    let n = x.n();
    if n < 2 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for i in 0..x.d() {
        for j in i..x.d() {
            let p = x.products(i, j);
            let mean = pairwise_sum(&p) / n as f64;
            let ss = pairwise_sum_by(n, |t| (p[t] - mean) * (p[t] - mean));
            best = best.max((ss / (n - 1) as f64).sqrt());
        }
    }
    best
}

fn sign(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Pairwise Kendall's tau with unit diagonal; ties count zero.
pub fn kendall_tau_matrix(x: &DataPanel) -> Result<DenseMatrix> {
    x.require_pairs()?;
    let (n, d) = (x.n(), x.d());
    let vals = x.values();
    let mut counts = vec![0i64; d * d];
    let mut s = vec![0i64; d];
    for t in 0..n {
        for u in t + 1..n {
            for j in 0..d {
                s[j] = sign(vals[(t, j)] - vals[(u, j)]);
            }
            for j in 0..d {
                if s[j] == 0 {
                    continue;
                }
                for k in j + 1..d {
                    counts[j * d + k] += s[j] * s[k];
                }
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(symmetric_from_upper(d, |j, k| {
        if j == k {
            1.0
        } else {
            counts[j * d + k] as f64 / pairs
        }
    }))
}

/// `D sin(π/2·τ̂) D` with `D = diag(stddevs)`.
pub fn kendall_marginal_cov(x: &DataPanel, stddevs: &[f64]) -> Result<CovarianceEstimate> {
    if stddevs.len() != x.d() {
        return Err(Error::DimensionMismatch(format!(
            "{} standard deviations for {} variables",
            stddevs.len(),
            x.d()
        )));
    }
    if let Some(bad) = stddevs.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!("standard deviations must be positive, got {bad}")));
    }
    let tau = kendall_tau_matrix(x)?;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let sigma_hat = symmetric_from_upper(x.d(), |j, k| {
        let r = if j == k { 1.0 } else { (half_pi * tau[(j, k)]).sin() };
        stddevs[j] * r * stddevs[k]
    });
    Ok(CovarianceEstimate {
        sigma_hat,
        method: EstimatorKind::KendallMarginal,
        centered: false,
        huber: None,
    })
}

/// Average of `(y_t − y_u)(y_t − y_u)ᵀ / ‖y_t − y_u‖²` over pairs `t < u`,
/// skipping duplicate rows. The result has unit trace.
pub fn kendall_spatial(x: &DataPanel) -> Result<DenseMatrix> {
    x.require_pairs()?;
    let (n, d) = (x.n(), x.d());
    let vals = x.values();
    let mut acc = vec![0.0; d * d];
    let mut used = 0usize;
    let mut diff = vec![0.0; d];
    for t in 0..n {
        for u in t + 1..n {
            for j in 0..d {
                diff[j] = vals[(t, j)] - vals[(u, j)];
            }
            let sq = pairwise_sum_by(d, |j| diff[j] * diff[j]);
            if sq == 0.0 {
                continue;
            }
            used += 1;
            for j in 0..d {
                let a = diff[j] / sq;
                for k in j..d {
                    acc[j * d + k] += a * diff[k];
                }
            }
        }
    }
    if used == 0 {
        return Err(Error::Degenerate("every pair of observations is identical".into()));
    }
    let m = used as f64;
    Ok(symmetric_from_upper(d, |j, k| acc[j * d + k] / m))
}

/// Wraps [`kendall_spatial`] as a covariance estimate.
pub fn kendall_spatial_cov(x: &DataPanel) -> Result<CovarianceEstimate> {
    Ok(CovarianceEstimate {
        sigma_hat: kendall_spatial(x)?,
        method: EstimatorKind::KendallSpatial,
        centered: false,
        huber: None,
    })
}
