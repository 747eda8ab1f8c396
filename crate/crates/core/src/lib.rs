//! Entrywise (ℓ∞) eigenvector perturbation analysis and robust covariance
//! estimation.
//!
//! The modules build on each other bottom-up:
//!
//! * [`matcore`]: dense matrices, norms, coherence, Hermitian dilation.
//! * [`spectra`]: symmetric eigensolvers and SVD through the dilation.
//! * [`fixpoint`]: the rotated eigenbasis `V̄` obtained from a quadratic matrix
//!   equation solved by fixed-point iteration.
//! * [`perturb`]: explicit-constant ℓ∞ bounds and their preconditions.
//! * [`robust`]: sample, Huber and Kendall covariance estimators.
//! * [`poet`]: principal orthogonal complement thresholding.

pub mod error;
pub mod fixpoint;
pub mod matcore;
pub mod perturb;
pub mod poet;
pub mod robust;
pub mod spectra;

pub use error::{Error, Result};
pub use matcore::DenseMatrix;
