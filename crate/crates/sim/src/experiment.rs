//! Experiment configurations, drivers and the tidy result table.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use specter_core::perturb::empirical_err;
use specter_core::poet::{poet, ErrorMetrics, PilotTrio, PoetConfig, PoetTruth};
use specter_core::robust::{huber_cov, kendall_marginal_cov, kendall_spatial, sample_cov, AlphaRule, HuberConfig};
use specter_core::spectra::eig_sym_top;

use crate::gen::{gen_factor_panel, gen_incoherent_lowrank, gen_perturbation, generator_v, FactorDist, FactorPanel, Mechanism};
use crate::rng::{derive_seed, tag};
use crate::stats::{iqr, log_log_slope, median};
use crate::SimError;

fn default_rank() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbExperimentConfig {
    pub d_grid: Vec<usize>,
    #[serde(default = "default_rank")]
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_sqrt_d: Option<f64>,
    pub mechanism: Mechanism,
    pub replications: usize,
    pub seed: u64,
}

impl PerturbExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.d_grid.is_empty() || self.d_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::Config("d_grid must be non-empty and strictly ascending".into()));
        }
        if self.r == 0 || self.r > self.d_grid[0] {
            return Err(SimError::Config(format!("r must lie in 1..={}, got {}", self.d_grid[0], self.r)));
        }
        match (self.gamma, self.gamma_sqrt_d) {
            (Some(g), None) | (None, Some(g)) if g > 0.0 && g.is_finite() => {}
            (Some(_), Some(_)) | (None, None) => {
                return Err(SimError::Config("set exactly one of gamma and gamma_sqrt_d".into()))
            }
            _ => return Err(SimError::Config("the eigengap must be positive and finite".into())),
        }
        if self.replications == 0 {
            return Err(SimError::Config("replications must be at least 1".into()));
        }
        self.mechanism.validate()
    }

    /// Eigengap used at dimension `d`.
    pub fn gamma_at(&self, d: usize) -> f64 {
        match (self.gamma, self.gamma_sqrt_d) {
            (Some(g), _) => g,
            (None, Some(g)) => g / (d as f64).sqrt(),
            (None, None) => f64::NAN,
        }
    }

    /// The `param` column for this run.
    pub fn label(&self) -> String {
        match (self.gamma, self.gamma_sqrt_d) {
            (Some(g), _) => format!("gamma={g}"),
            (None, Some(g)) => format!("gamma_sqrt_d={g}"),
            (None, None) => "unset".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NRule {
    HalfD,
    Fixed(usize),
}

impl NRule {
    pub fn n_for(self, d: usize) -> usize {
        match self {
            NRule::HalfD => d / 2,
            NRule::Fixed(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorExperimentConfig {
    pub d_grid: Vec<usize>,
    pub n_rule: NRule,
    #[serde(default = "default_rank")]
    pub r: usize,
    pub dist: FactorDist,
    pub methods: Vec<u8>,
    pub replications: usize,
    pub seed: u64,
}

impl FactorExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.d_grid.is_empty() || self.d_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::Config("d_grid must be non-empty and strictly ascending".into()));
        }
        if self.r == 0 || self.r >= self.d_grid[0] {
            return Err(SimError::Config(format!("r must lie in 1..{}, got {}", self.d_grid[0], self.r)));
        }
        if let Some(&d) = self.d_grid.iter().find(|&&d| self.n_rule.n_for(d) < 2) {
            return Err(SimError::Config(format!("the sample size rule gives n < 2 at d={d}")));
        }
        if self.methods.is_empty() || self.methods.iter().any(|m| !(1..=4).contains(m)) {
            return Err(SimError::Config(format!("methods must be a non-empty subset of 1..=4, got {:?}", self.methods)));
        }
        if self.replications == 0 {
            return Err(SimError::Config("replications must be at least 1".into()));
        }
        Ok(())
    }

    fn sorted_methods(&self) -> Vec<u8> {
        let mut m = self.methods.clone();
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// One tidy output record. `d` and `rep` are empty on aggregate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub d: Option<usize>,
    pub param: String,
    pub rep: Option<usize>,
    pub metric: String,
    pub value: f64,
}

impl ResultRow {
    fn new(experiment: &str, d: Option<usize>, param: &str, rep: Option<usize>, metric: &str, value: f64) -> Self {
        Self {
            experiment: experiment.into(),
            d,
            param: param.into(),
            rep,
            metric: metric.into(),
            value,
        }
    }

    fn key(&self) -> (&str, Option<usize>, &str, Option<usize>, &str) {
        (&self.experiment, self.d, &self.param, self.rep, &self.metric)
    }
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
}

/// Writes rows with the header `experiment,d,param,rep,metric,value`.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["experiment", "d", "param", "rep", "metric", "value"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>, SimError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<_>, _>>()
        .map_err(SimError::from)
}

/// `max_i min_± ‖±ṽ_i − v_i‖∞` for one `(d, rep)` draw.
pub fn perturb_instance_err(cfg: &PerturbExperimentConfig, d: usize, rep: usize) -> Result<f64, SimError> {
    let key = [d as u64, rep as u64];
    let signal = gen_incoherent_lowrank(d, cfg.r, cfg.gamma_at(d), derive_seed(cfg.seed, &[tag::LOW_RANK, key[0], key[1]]));
    let e = gen_perturbation(d, cfg.mechanism, derive_seed(cfg.seed, &[tag::PERTURBATION, key[0], key[1]]));
    let top = eig_sym_top(&signal.a.add(&e), cfg.r)?;
    Ok(empirical_err(&signal.v, &top.vectors)?)
}

/// Per-replication errors, the max over replications for each `d`, and the
/// log-log slope of the maxima.
///
/// Rows: `err` per replication, `err_max` and `err_max_scaled` (times `γ√d`)
/// per `d`, and run-level `slope` and `scaled_max_over_min`. A failed
/// replication is recorded as a `failed` row and skipped in the aggregates.
pub fn run_perturb_experiment(cfg: &PerturbExperimentConfig) -> Result<Vec<ResultRow>, SimError> {
    cfg.validate()?;
    const EXP: &str = "perturb";
    let label = cfg.label();
    let tasks: Vec<(usize, usize)> = cfg
        .d_grid
        .iter()
        .flat_map(|&d| (0..cfg.replications).map(move |rep| (d, rep)))
        .collect();
    let results: Vec<(usize, usize, Result<f64, SimError>)> = tasks
        .par_iter()
        .map(|&(d, rep)| (d, rep, perturb_instance_err(cfg, d, rep)))
        .collect();

    let mut rows = Vec::new();
    let mut max_by_d: BTreeMap<usize, f64> = BTreeMap::new();
    for (d, rep, res) in results {
        match res {
            Ok(err) => {
                rows.push(ResultRow::new(EXP, Some(d), &label, Some(rep), "err", err));
                let m = max_by_d.entry(d).or_insert(f64::NEG_INFINITY);
                *m = m.max(err);
            }
            Err(e) => {
                log::warn!("perturb d={d} rep={rep} failed: {e}");
                rows.push(ResultRow::new(EXP, Some(d), &label, Some(rep), "failed", 1.0));
            }
        }
    }
    let mut scaled = Vec::new();
    for (&d, &m) in &max_by_d {
        let s = m * cfg.gamma_at(d) * (d as f64).sqrt();
        scaled.push(s);
        rows.push(ResultRow::new(EXP, Some(d), &label, None, "gamma", cfg.gamma_at(d)));
        rows.push(ResultRow::new(EXP, Some(d), &label, None, "err_max", m));
        rows.push(ResultRow::new(EXP, Some(d), &label, None, "err_max_scaled", s));
    }
    let ds: Vec<usize> = max_by_d.keys().copied().collect();
    let maxima: Vec<f64> = max_by_d.values().copied().collect();
    let slope = log_log_slope(&ds, &maxima).unwrap_or(f64::NAN);
    rows.push(ResultRow::new(EXP, None, &label, None, "slope", slope));
    let hi = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    rows.push(ResultRow::new(EXP, None, &label, None, "scaled_max_over_min", hi / lo));
    sort_rows(&mut rows);
    Ok(rows)
}

/// The three error metrics compared across methods.
pub const RATIO_METRICS: [&str; 3] = ["err_u_spectral", "err_precision", "err_relative_frob"];

fn metric_value(m: &ErrorMetrics, name: &str) -> f64 {
    match name {
        "err_u_spectral" => m.err_u_spectral,
        "err_precision" => m.err_precision,
        "err_relative_frob" => m.err_relative_frob,
        "err_precision_u" => m.err_precision_u,
        "err_max" => m.err_max,
        _ => f64::NAN,
    }
}

/// Builds the pilot trio for method `k`:
/// 1 sample covariance, 2 Huber, 3 marginal Kendall's tau scaled by Huber
/// standard deviations, 4 as 3 but with eigenvectors of spatial Kendall's tau.
pub fn build_pilot(panel: &FactorPanel, dist: FactorDist, r: usize, method: u8) -> Result<PilotTrio, SimError> {
    let x = &panel.x;
    let huber = || -> Result<_, SimError> {
        let cfg = HuberConfig::from_rule(x.n(), x.d(), generator_v(dist, &panel.b), AlphaRule::Confidence)?;
        Ok(huber_cov(x, &cfg).sigma_hat)
    };
    let marginal = || -> Result<_, SimError> {
        let sd: Vec<f64> = huber()?.diag().iter().map(|s| s.max(0.0).sqrt()).collect();
        Ok(kendall_marginal_cov(x, &sd)?.sigma_hat)
    };
    let pilot = match method {
        1 => PilotTrio::from_covariance(sample_cov(x, false).sigma_hat, r)?,
        2 => PilotTrio::from_covariance(huber()?, r)?,
        3 => PilotTrio::from_covariance(marginal()?, r)?,
        4 => PilotTrio::with_vectors_from(marginal()?, &kendall_spatial(x)?, r)?,
        k => return Err(SimError::Config(format!("unknown method {k}"))),
    };
    Ok(pilot)
}

/// Runs one `(d, rep)` draw through every requested method plus the
/// method-1 baseline.
fn factor_instance(
    cfg: &FactorExperimentConfig,
    methods: &[u8],
    d: usize,
    rep: usize,
) -> Result<Vec<(u8, Result<ErrorMetrics, SimError>)>, SimError> {
    let n = cfg.n_rule.n_for(d);
    let seed = derive_seed(cfg.seed, &[tag::FACTOR_PANEL, d as u64, rep as u64]);
    let panel = gen_factor_panel(cfg.dist, cfg.r, d, n, seed)?;
    let truth = PoetTruth::new(panel.sigma.clone(), panel.sigma_u.clone())?;
    let poet_cfg = PoetConfig {
        psd_repair: true,
        ..PoetConfig::new(cfg.r)
    };
    let mut wanted = methods.to_vec();
    if !wanted.contains(&1) {
        wanted.insert(0, 1);
    }
    Ok(wanted
        .into_iter()
        .map(|k| {
            let res = build_pilot(&panel, cfg.dist, cfg.r, k)
                .and_then(|pilot| Ok(poet(&panel.x, &pilot, &poet_cfg, Some(&truth))?))
                .and_then(|out| out.metrics.ok_or_else(|| SimError::Config("metrics missing".into())));
            (k, res)
        })
        .collect())
}

/// POET errors for each method, their ratios against method 1, and medians
/// and IQRs of both over replications.
///
/// Per-replication rows carry each metric and `ratio_<metric>`; aggregate rows
/// carry `median_…` and `iqr_…` of those. `param` is `method=k`.
pub fn run_factor_experiment(cfg: &FactorExperimentConfig) -> Result<Vec<ResultRow>, SimError> {
    cfg.validate()?;
    const EXP: &str = "factor";
    let methods = cfg.sorted_methods();
    let tasks: Vec<(usize, usize)> = cfg
        .d_grid
        .iter()
        .flat_map(|&d| (0..cfg.replications).map(move |rep| (d, rep)))
        .collect();
    let results: Vec<(usize, usize, Result<Vec<(u8, Result<ErrorMetrics, SimError>)>, SimError>)> = tasks
        .par_iter()
        .map(|&(d, rep)| (d, rep, factor_instance(cfg, &methods, d, rep)))
        .collect();

    let mut rows = Vec::new();
    // (d, method, metric) -> replicated values
    let mut series: BTreeMap<(usize, u8, String), Vec<f64>> = BTreeMap::new();
    for (d, rep, res) in results {
        let per_method = match res {
            Ok(v) => v,
            Err(e) => {
                log::warn!("factor d={d} rep={rep} failed: {e}");
                for &k in &methods {
                    rows.push(ResultRow::new(EXP, Some(d), &format!("method={k}"), Some(rep), "failed", 1.0));
                }
                continue;
            }
        };
        let baseline = per_method.iter().find(|(k, _)| *k == 1).and_then(|(_, m)| m.as_ref().ok()).cloned();
        for (k, res) in per_method {
            if !methods.contains(&k) {
                continue;
            }
            let param = format!("method={k}");
            let m = match res {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("factor d={d} rep={rep} method={k} failed: {e}");
                    rows.push(ResultRow::new(EXP, Some(d), &param, Some(rep), "failed", 1.0));
                    continue;
                }
            };
            for name in RATIO_METRICS {
                let value = metric_value(&m, name);
                let ratio = baseline.as_ref().map_or(f64::NAN, |b| value / metric_value(b, name));
                let ratio_name = format!("ratio_{name}");
                rows.push(ResultRow::new(EXP, Some(d), &param, Some(rep), name, value));
                rows.push(ResultRow::new(EXP, Some(d), &param, Some(rep), &ratio_name, ratio));
                series.entry((d, k, name.to_string())).or_default().push(value);
                series.entry((d, k, ratio_name)).or_default().push(ratio);
            }
        }
    }
    for ((d, k, name), values) in &series {
        let param = format!("method={k}");
        rows.push(ResultRow::new(EXP, Some(*d), &param, None, &format!("median_{name}"), median(values)));
        rows.push(ResultRow::new(EXP, Some(*d), &param, None, &format!("iqr_{name}"), iqr(values)));
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`. Output never depends on the choice.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(SimError::Config("threads must be at least 1".into())),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
    }
}

/// Looks up a single value by its key fields.
pub fn find_value(rows: &[ResultRow], d: Option<usize>, param: &str, rep: Option<usize>, metric: &str) -> Option<f64> {
    rows.iter()
        .find(|r| r.d == d && r.param == param && r.rep == rep && r.metric == metric)
        .map(|r| r.value)
}
