//! Seeded generators for low-rank signals, structured perturbations and
//! factor-model panels.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use specter_core::matcore::norm_inf;
use specter_core::robust::DataPanel;
use specter_core::DenseMatrix;

use crate::rng::stream;
use crate::SimError;

/// Idiosyncratic variance of the factor-model panels.
pub const IDIO_VAR: f64 = 5.0;

/// How the perturbation `E` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Each row of `E0` gets `s` distinct random entries drawn from U[0, L];
    /// `E = (E0 + E0ᵀ)/2`.
    SparseRows {
        s: usize,
        #[serde(alias = "L")]
        l: f64,
    },
    /// `E_ij = L′ρ^|i−j|`.
    Toeplitz {
        #[serde(alias = "L_prime")]
        l_prime: f64,
        rho: f64,
    },
}

impl Mechanism {
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            Mechanism::SparseRows { s, l } if s == 0 || !(l > 0.0 && l.is_finite()) => {
                Err(SimError::Config(format!("sparse_rows needs s >= 1 and L > 0, got s={s}, L={l}")))
            }
            Mechanism::Toeplitz { l_prime, rho } if !(l_prime > 0.0 && l_prime.is_finite()) || !(rho > 0.0 && rho < 1.0) => {
                Err(SimError::Config(format!("toeplitz needs L' > 0 and rho in (0,1), got L'={l_prime}, rho={rho}")))
            }
            _ => Ok(()),
        }
    }
}

/// Degrees of freedom: finite and above 2, or infinite for Gaussian tails.
/// In JSON an infinite value is written as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NuRepr", into = "NuRepr")]
pub struct Nu(f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NuRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<NuRepr> for Nu {
    type Error = String;

    fn try_from(r: NuRepr) -> Result<Self, String> {
        let x = match r {
            NuRepr::Num(x) => x,
            NuRepr::Text(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "gaussian" => f64::INFINITY,
                other => other.parse().map_err(|_| format!("unrecognised degrees of freedom {s:?}"))?,
            },
        };
        Nu::new(x).map_err(|e| e.to_string())
    }
}

impl From<Nu> for NuRepr {
    fn from(nu: Nu) -> Self {
        if nu.0.is_finite() {
            NuRepr::Num(nu.0)
        } else {
            NuRepr::Text("inf".into())
        }
    }
}

impl Nu {
    pub const GAUSSIAN: Nu = Nu(f64::INFINITY);

    pub fn new(nu: f64) -> Result<Self, SimError> {
        if nu > 2.0 {
            Ok(Nu(nu))
        } else {
            Err(SimError::Config(format!("degrees of freedom must exceed 2, got {nu}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_gaussian(self) -> bool {
        self.0.is_infinite()
    }

    /// Whether the fourth moment is finite.
    pub fn has_fourth_moment(self) -> bool {
        self.0 > 4.0
    }

    /// Excess kurtosis of a t variable, zero for Gaussian tails. Only
    /// meaningful when the fourth moment exists.
    pub fn excess_kurtosis(self) -> f64 {
        if self.is_gaussian() {
            0.0
        } else {
            6.0 / (self.0 - 4.0)
        }
    }
}

/// Sampler for a t variable rescaled to unit variance.
pub enum UnitT {
    Gaussian,
    T { dist: StudentT<f64>, scale: f64 },
}

impl UnitT {
    pub fn new(nu: Nu) -> Self {
        if nu.is_gaussian() {
            UnitT::Gaussian
        } else {
            let v = nu.value();
            UnitT::T {
                dist: StudentT::new(v).expect("nu > 2 is a valid t parameter"),
                scale: ((v - 2.0) / v).sqrt(),
            }
        }
    }
}

impl Distribution<f64> for UnitT {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            UnitT::Gaussian => rng.sample(StandardNormal),
            UnitT::T { dist, scale } => dist.sample(rng) * scale,
        }
    }
}

/// Which law drives the factors and idiosyncratic errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorDist {
    /// Joint multivariate t for `(f, u)`.
    Mvt { nu: Nu },
    /// Independent standardised t coordinates.
    IidT { nu: Nu },
}

impl FactorDist {
    pub fn nu(self) -> Nu {
        match self {
            FactorDist::Mvt { nu } | FactorDist::IidT { nu } => nu,
        }
    }

    pub fn label(self) -> String {
        let nu = self.nu();
        let nu = if nu.is_gaussian() { "inf".to_string() } else { nu.value().to_string() };
        match self {
            FactorDist::Mvt { .. } => format!("mvt(nu={nu})"),
            FactorDist::IidT { .. } => format!("iid_t(nu={nu})"),
        }
    }
}

/// A low-rank signal `A = V D Vᵀ`.
#[derive(Debug, Clone)]
pub struct LowRank {
    pub a: DenseMatrix,
    pub v: DenseMatrix,
    /// `rγ, (r−1)γ, …, γ`.
    pub eigenvalues: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Orthonormalises the columns by Gram-Schmidt applied twice.
fn orthonormal_columns(g: &DenseMatrix) -> DenseMatrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(g.cols());
    for j in 0..g.cols() {
        let mut v = g.col(j);
        for _ in 0..2 {
            for c in &cols {
                let s: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= s * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    DenseMatrix::from_columns(&cols).expect("columns share a length")
}

/// `V` spans the column space of a `d×r` standard Gaussian matrix, so it is
/// Haar distributed on the Stiefel manifold. Panics if `r > d`.
pub fn gen_incoherent_lowrank(d: usize, r: usize, gamma: f64, seed: u64) -> LowRank {
    assert!(r <= d, "rank {r} exceeds dimension {d}");
    let mut rng = stream(seed);
    let v = orthonormal_columns(&gaussian(&mut rng, d, r));
    let eigenvalues: Vec<f64> = (0..r).map(|k| (r - k) as f64 * gamma).collect();
    let scaled = DenseMatrix::from_fn(d, r, |i, j| v.get(i, j) * eigenvalues[j]);
    let a = scaled.matmul_t(&v).symmetrize();
    LowRank { a, v, eigenvalues }
}

/// The unsymmetrised `E0` of the sparse-rows mechanism.
pub fn sparse_rows_e0(d: usize, s: usize, l: f64, rng: &mut ChaCha20Rng) -> DenseMatrix {
    let mut e0 = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in sample(rng, d, s.min(d)) {
            let x = rng.random_range(0.0..=l);
            e0.set(i, j, x);
        }
    }
    e0
}

pub fn toeplitz(d: usize, l_prime: f64, rho: f64) -> DenseMatrix {
    DenseMatrix::from_fn(d, d, |i, j| l_prime * rho.powi(i.abs_diff(j) as i32))
}

/// Symmetric perturbation for one instance. Panics on invalid mechanism
/// parameters, and if a Toeplitz instance breaks `‖E‖∞ ≤ 2L′/(1−ρ)`.
pub fn gen_perturbation(d: usize, mechanism: Mechanism, seed: u64) -> DenseMatrix {
    mechanism.validate().expect("invalid perturbation mechanism");
    match mechanism {
        Mechanism::SparseRows { s, l } => {
            let e0 = sparse_rows_e0(d, s, l, &mut stream(seed));
            e0.add(&e0.transpose()).scale(0.5)
        }
        Mechanism::Toeplitz { l_prime, rho } => {
            let e = toeplitz(d, l_prime, rho);
            let inf = norm_inf(&e).expect("square matrix");
            assert!(inf <= 2.0 * l_prime / (1.0 - rho), "toeplitz row sum {inf} exceeds 2L'/(1-rho)");
            e
        }
    }
}

/// One factor-model draw `y_t = B f_t + u_t`, stored with observations as rows.
#[derive(Debug, Clone)]
pub struct FactorPanel {
    pub x: DataPanel,
    pub b: DenseMatrix,
    /// `BBᵀ + 5I`.
    pub sigma: DenseMatrix,
    /// `5I`.
    pub sigma_u: DenseMatrix,
}

/// `n` draws of the latent vector `(f, u) ∈ R^{r+d}` with covariance
/// `diag{I_r, 5I_d}`, one per row.
pub fn sample_latent(dist: FactorDist, r: usize, d: usize, n: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    let sd: Vec<f64> = (0..r + d).map(|k| if k < r { 1.0 } else { IDIO_VAR.sqrt() }).collect();
    let mut out = DenseMatrix::zeros(n, r + d);
    match dist {
        FactorDist::Mvt { nu } => {
            let chi = (!nu.is_gaussian()).then(|| ChiSquared::new(nu.value()).expect("nu > 2"));
            for t in 0..n {
                let row = out.row_mut(t);
                row.iter_mut().zip(&sd).for_each(|(z, s)| *z = s * rng.sample::<f64, _>(StandardNormal));
                if let Some(c) = &chi {
                    let scale = ((nu.value() - 2.0) / c.sample(rng)).sqrt();
                    row.iter_mut().for_each(|z| *z *= scale);
                }
            }
        }
        FactorDist::IidT { nu } => {
            let unit = UnitT::new(nu);
            for t in 0..n {
                out.row_mut(t).iter_mut().zip(&sd).for_each(|(z, s)| *z = s * unit.sample(rng));
            }
        }
    }
    out
}

/// Draws `B` with standard normal entries, then `n` observations
/// `y_t = B f_t + u_t` from [`sample_latent`].
pub fn gen_factor_panel(dist: FactorDist, r: usize, d: usize, n: usize, seed: u64) -> Result<FactorPanel, SimError> {
    if n == 0 || d == 0 {
        return Err(SimError::Config(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    let mut rng = stream(seed);
    let b = gaussian(&mut rng, d, r);
    let latent = sample_latent(dist, r, d, n, &mut rng);
    let y = latent.columns(0..r).matmul_t(&b).add(&latent.columns(r..r + d));
    let sigma = b.matmul_t(&b).add_identity(IDIO_VAR);
    Ok(FactorPanel {
        x: DataPanel::new(y)?,
        b,
        sigma,
        sigma_u: DenseMatrix::identity(d).scale(IDIO_VAR),
    })
}

/// `max_ij √Var(y_i y_j)` for a factor panel with loadings `b`.
///
/// Exact when the fourth moment exists. For `ν ≤ 4` the variance is infinite
/// and the Gaussian value `σ_iiσ_jj + σ_ij²` is returned instead.
pub fn generator_v(dist: FactorDist, b: &DenseMatrix) -> f64 {
    let d = b.rows();
    let sigma = b.matmul_t(b).add_identity(IDIO_VAR);
    let nu = dist.nu();
    let heavy = nu.has_fourth_moment() && !nu.is_gaussian();
    // Σ_k M_ik² M_jk² s_k² over the latent coordinates, with M = [B, I] and
    // latent variances s = (1, …, 1, 5, …, 5).
    let b2 = b.map(|x| x * x);
    let quartic = b2.matmul_t(&b2).add_identity(IDIO_VAR * IDIO_VAR);
    let mut v2 = 0.0f64;
    for i in 0..d {
        for j in i..d {
            let (sii, sjj, sij) = (sigma.get(i, i), sigma.get(j, j), sigma.get(i, j));
            let gauss = sii * sjj + sij * sij;
            let var = match dist {
                _ if !heavy => gauss,
                FactorDist::Mvt { nu } => {
                    let k = (nu.value() - 2.0) / (nu.value() - 4.0);
                    k * (sii * sjj + 2.0 * sij * sij) - sij * sij
                }
                FactorDist::IidT { nu } => gauss + nu.excess_kurtosis() * quartic.get(i, j),
            };
            v2 = v2.max(var);
        }
    }
    v2.sqrt()
}

/// `n×d` panel of independent unit-variance t coordinates.
pub fn gen_iid_t_panel(n: usize, d: usize, nu: Nu, seed: u64) -> Result<DataPanel, SimError> {
    let mut rng = stream(seed);
    let unit = UnitT::new(nu);
    Ok(DataPanel::new(DenseMatrix::from_fn(n, d, |_, _| unit.sample(&mut rng)))?)
}

/// `max_ij √Var(X_i X_j)` for [`gen_iid_t_panel`]: `√(E X⁴ − 1)` from the
/// diagonal, or `√2` when the fourth moment is infinite.
pub fn iid_t_product_sd(nu: Nu) -> f64 {
    if nu.has_fourth_moment() {
        (2.0 + nu.excess_kurtosis()).sqrt()
    } else {
        2f64.sqrt()
    }
}
