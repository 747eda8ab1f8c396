//! Seeded Monte-Carlo drivers for entrywise eigenvector perturbation and
//! robust factor-model covariance experiments.
//!
//! Every random draw comes from a stream keyed by `(run seed, task key)`, and
//! rows are sorted by key before they are returned, so output does not depend
//! on the number of worker threads.

pub mod experiment;
pub mod gen;
pub mod rng;
pub mod stats;

pub use experiment::{
    find_value, read_csv, run_factor_experiment, run_perturb_experiment, with_threads, write_csv,
    FactorExperimentConfig, NRule, PerturbExperimentConfig, ResultRow,
};
pub use gen::{FactorDist, Mechanism, Nu};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] specter_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}
