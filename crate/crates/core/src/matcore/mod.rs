//! Dense matrix container, norms, coherence and dilation.

mod lu;
mod matrix;
mod norms;
pub mod sum;

pub use lu::Lu;
pub use matrix::DenseMatrix;
pub use norms::{
    check_orthonormal, coherence, epsilon0, frobenius, hermitian_dilation, max_norm, norm_inf,
    norm_one, orthonormality_defect, spectral_norm, tau0, weighted_max_norm, CoherenceReport,
    NormReport, WeightedMaxNorm, ORTHONORMAL_TOL,
};
pub(crate) use norms::balanced_residual;
