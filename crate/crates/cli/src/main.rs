//! `specter`: norms, spectra, perturbation bounds, the fixed-point basis,
//! robust covariance estimators, POET and the simulation harness.
//!
//! Matrices are read and written as headerless CSV; reports are JSON. Errors
//! go to stderr as a single `code=<n> msg=<text>` line with exit code 2
//! (usage), 3 (bad data) or 4 (numerical failure).

mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use specter_core::fixpoint::{solve_qbar, FixpointProblem, FixpointSolution};
use specter_core::matcore::NormReport;
use specter_core::perturb::{BoundMode, PerturbationReport};
use specter_core::poet::{poet, PilotTrio, PoetConfig, PoetTruth, Shrink};
use specter_core::robust::{
    huber_cov, kendall_marginal_cov, kendall_spatial, kendall_spatial_cov, sample_cov, AlphaRule, CovarianceEstimate,
    DataPanel, HuberConfig,
};
use specter_core::spectra::{eig_sym, eig_sym_top, svd};
use specter_core::DenseMatrix;
use specter_sim::{
    run_factor_experiment, run_perturb_experiment, with_threads, write_csv, FactorExperimentConfig,
    PerturbExperimentConfig,
};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "specter", version, about = "Entrywise eigenvector perturbation and robust covariance toolkit")]
struct Cli {
    /// Overrides the seed in simulation configs.
    #[arg(long, global = true, env = "SPECTER_SEED")]
    seed: Option<u64>,
    /// Worker threads for simulations; output does not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sym,
    Rect,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Sample,
    Huber,
    KendallMarginal,
    KendallSpatial,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PilotArg {
    Sample,
    Huber,
    KendallMarginal,
    KendallSpatialEvec,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlphaArg {
    Confidence,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShrinkArg {
    Hard,
    Soft,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Matrix norms, τ0 and (with --rank) the balanced residual ε0.
    Norms {
        matrix: PathBuf,
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Eigen-decomposition of a symmetric matrix, or singular triplets.
    Eig {
        matrix: PathBuf,
        /// Keep only the leading k pairs (by |λ|).
        #[arg(long)]
        top: Option<usize>,
        /// Singular value decomposition instead; works on rectangular input.
        #[arg(long)]
        singular: bool,
    },
    /// Entrywise perturbation bounds for A + E.
    Bound {
        #[arg(long = "A")]
        a: PathBuf,
        #[arg(long = "E")]
        e: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long, value_enum, default_value = "sym")]
        mode: ModeArg,
        /// Isolation radius; computed from the spectrum when absent.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Fixed-point solve for Q̄ and the rotated basis V̄.
    Fixpoint {
        #[arg(long = "A")]
        a: PathBuf,
        #[arg(long = "E")]
        e: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = specter_core::fixpoint::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = specter_core::fixpoint::DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Covariance estimate from an n×d data panel.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Bound on max √Var(X_i X_j); required for huber and kendall-marginal.
        #[arg(long)]
        v: Option<f64>,
        #[arg(long, value_enum, default_value = "confidence")]
        alpha_rule: AlphaArg,
        #[arg(long)]
        center: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generic POET with a chosen pilot.
    Poet {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long, value_enum, default_value = "sample")]
        pilot: PilotArg,
        /// Huber variance bound; required by every pilot except sample.
        #[arg(long)]
        v: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        tau_scale: f64,
        #[arg(long, value_enum, default_value = "soft")]
        shrink: ShrinkArg,
        #[arg(long)]
        use_wn: bool,
        #[arg(long)]
        psd_repair: bool,
        #[arg(long, requires = "truth_u")]
        truth: Option<PathBuf>,
        #[arg(long, requires = "truth")]
        truth_u: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo experiments; writes tidy CSV.
    Sim {
        #[command(subcommand)]
        kind: SimCommand,
    },
}

#[derive(Debug, Subcommand)]
enum SimCommand {
    Perturb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Factor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> Result<DenseMatrix, CliError> {
    DenseMatrix::from_csv_str(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_panel(path: &Path) -> Result<DataPanel, CliError> {
    Ok(DataPanel::new(read_matrix(path)?)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn need_v(v: Option<f64>, what: &str) -> Result<f64, CliError> {
    match v {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(CliError::Usage(format!("--v must be positive and finite, got {v}"))),
        None => Err(CliError::Usage(format!("{what} requires --v"))),
    }
}

fn rule(a: AlphaArg) -> AlphaRule {
    match a {
        AlphaArg::Confidence => AlphaRule::Confidence,
        AlphaArg::Literal => AlphaRule::Literal,
    }
}

#[derive(Serialize)]
struct FixpointReport {
    #[serde(flatten)]
    solution: FixpointSolution,
    match_precondition: bool,
    h_bound: f64,
    contraction_bound: f64,
}

fn huber_estimate(x: &DataPanel, v: f64, alpha: AlphaArg) -> Result<CovarianceEstimate, CliError> {
    let cfg = HuberConfig::from_rule(x.n(), x.d(), v, rule(alpha))?;
    Ok(huber_cov(x, &cfg))
}

fn stddevs(est: &CovarianceEstimate) -> Vec<f64> {
    est.sigma_hat.diag().iter().map(|s| s.max(0.0).sqrt()).collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Norms { matrix, rank } => {
            let m = read_matrix(&matrix)?;
            emit(None, &json(&NormReport::compute(&m, rank)?)?)
        }
        Command::Eig { matrix, top, singular } => {
            let m = read_matrix(&matrix)?;
            let text = if singular {
                json(&svd(&m, top.unwrap_or(m.rows().min(m.cols())))?)?
            } else {
                match top {
                    Some(k) => json(&eig_sym_top(&m, k)?)?,
                    None => json(&eig_sym(&m)?)?,
                }
            };
            emit(None, &text)
        }
        Command::Bound { a, e, rank, mode, delta } => {
            let (a, e) = (read_matrix(&a)?, read_matrix(&e)?);
            let mode = match mode {
                ModeArg::Sym => BoundMode::Sym,
                ModeArg::Rect => BoundMode::Rect,
            };
            emit(None, &json(&PerturbationReport::compute(&a, &e, rank, mode, delta)?)?)
        }
        Command::Fixpoint { a, e, rank, tol, max_iter } => {
            let p = FixpointProblem::new(&read_matrix(&a)?, &read_matrix(&e)?, rank)?;
            let solution = solve_qbar(&p, tol, max_iter)?;
            let report = FixpointReport {
                solution,
                match_precondition: p.match_precondition(),
                h_bound: p.h_bound(),
                contraction_bound: p.contraction_bound(),
            };
            emit(None, &json(&report)?)
        }
        Command::Estimate { data, method, v, alpha_rule, center, out } => {
            let v = match method {
                MethodArg::Huber => Some(need_v(v, "--method huber")?),
                MethodArg::KendallMarginal => Some(need_v(v, "--method kendall-marginal")?),
                _ => None,
            };
            let x = read_panel(&data)?;
            let x = if center { x.centered() } else { x };
            let est = match method {
                MethodArg::Sample => sample_cov(&x, false),
                MethodArg::Huber => huber_estimate(&x, v.unwrap_or_default(), alpha_rule)?,
                MethodArg::KendallMarginal => {
                    let sd = stddevs(&huber_estimate(&x, v.unwrap_or_default(), alpha_rule)?);
                    kendall_marginal_cov(&x, &sd)?
                }
                MethodArg::KendallSpatial => kendall_spatial_cov(&x)?,
            };
            emit(out.as_deref(), &est.sigma_hat.to_csv_string())
        }
        Command::Poet {
            data,
            rank,
            pilot,
            v,
            tau_scale,
            shrink,
            use_wn,
            psd_repair,
            truth,
            truth_u,
            out,
        } => {
            let v = match pilot {
                PilotArg::Sample => None,
                _ => Some(need_v(v, "a robust pilot")?),
            };
            if rank == 0 {
                return Err(CliError::Usage("--rank must be at least 1".into()));
            }
            let cfg = PoetConfig {
                tau_scale,
                shrink: match shrink {
                    ShrinkArg::Hard => Shrink::Hard,
                    ShrinkArg::Soft => Shrink::Soft,
                },
                use_wn,
                psd_repair,
                ..PoetConfig::new(rank)
            };
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let x = read_panel(&data)?;
            let v = v.unwrap_or_default();
            let trio = match pilot {
                PilotArg::Sample => PilotTrio::from_covariance(sample_cov(&x, false).sigma_hat, rank)?,
                PilotArg::Huber => PilotTrio::from_covariance(huber_estimate(&x, v, AlphaArg::Confidence)?.sigma_hat, rank)?,
                PilotArg::KendallMarginal | PilotArg::KendallSpatialEvec => {
                    let sd = stddevs(&huber_estimate(&x, v, AlphaArg::Confidence)?);
                    let marginal = kendall_marginal_cov(&x, &sd)?.sigma_hat;
                    if matches!(pilot, PilotArg::KendallMarginal) {
                        PilotTrio::from_covariance(marginal, rank)?
                    } else {
                        PilotTrio::with_vectors_from(marginal, &kendall_spatial(&x)?, rank)?
                    }
                }
            };
            let truth = match (truth, truth_u) {
                (Some(s), Some(u)) => Some(PoetTruth::new(read_matrix(&s)?, read_matrix(&u)?)?),
                _ => None,
            };
            let result = poet(&x, &trio, &cfg, truth.as_ref())?;
            emit(out.as_deref(), &json(&result)?)
        }
        Command::Sim { kind } => {
            let (config, out, perturb) = match kind {
                SimCommand::Perturb { config, out } => (config, out, true),
                SimCommand::Factor { config, out } => (config, out, false),
            };
            let text = read_text(&config)?;
            let rows = if perturb {
                let mut cfg: PerturbExperimentConfig = serde_json::from_str(&text)?;
                cfg.seed = cli.seed.unwrap_or(cfg.seed);
                with_threads(cli.threads.map(|t| t as usize), || run_perturb_experiment(&cfg))??
            } else {
                let mut cfg: FactorExperimentConfig = serde_json::from_str(&text)?;
                cfg.seed = cli.seed.unwrap_or(cfg.seed);
                with_threads(cli.threads.map(|t| t as usize), || run_factor_experiment(&cfg))??
            };
            let mut buf = Vec::new();
            write_csv(&rows, &mut buf)?;
            emit(out.as_deref(), &String::from_utf8(buf).expect("csv output is UTF-8"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid usage");
            let msg = first.trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(msg.to_string()).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", e.line());
            ExitCode::from(e.code())
        }
    }
}
