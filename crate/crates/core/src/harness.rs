//! Monte Carlo engine: replication loops with common random numbers, loss
//! aggregation, PRIAL, URE validation and domination checks.
//!
//! Every replication of a `(task, r)` cell draws one dataset from its own
//! generator substream and evaluates every estimator on it. Replications may
//! run on several threads; results are reduced in replication order, so
//! output does not depend on the thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{estimate, Estimate, EstimatorSpec, Preset, Task};
use crate::ingest;
use crate::io::format_f64;
use crate::linalg::{frobenius_loss, invariant_squared_loss, squared_loss, SpectralDecomposition};
use crate::model::{
    ar_singular_covariance, sample_singular_mvn, sample_statistics_with, singularize, substream,
    Centering, PopulationModel, SampleStatistics,
};
use crate::ure::{ure_covariance, ure_discriminant, ure_precision, Differentiation};

pub const DEFAULT_SEED: u64 = 20_150_601;

/// Column header of the results CSV.
pub const RESULTS_HEADER: &str = "task,estimator,n,p,r,reps,mean_loss,se_loss,prial,skipped";

/// `100 · (mean_ref − mean_est) / mean_ref`.
pub fn prial(mean_ref: f64, mean_est: f64) -> Result<f64> {
    if mean_ref.is_nan() || mean_ref <= 0.0 {
        return Err(Error::NonpositiveReference(mean_ref));
    }
    Ok(100.0 * (mean_ref - mean_est) / mean_ref)
}

/// Source of the full-rank covariance that is singularized to each rank.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    Ar { rho: f64 },
    Fixed { label: String, sigma: DMatrix<f64> },
}

impl CovarianceModel {
    pub fn label(&self) -> String {
        match self {
            CovarianceModel::Ar { rho } => format!("ar({rho})"),
            CovarianceModel::Fixed { label, .. } => label.clone(),
        }
    }

    /// `N_p(1, Σ_r)` with `Σ_r` the rank-`r` truncation of the model.
    pub fn population(&self, p: usize, r: usize) -> Result<PopulationModel> {
        let sigma = match self {
            CovarianceModel::Ar { rho } => ar_singular_covariance(p, r, *rho)?,
            CovarianceModel::Fixed { sigma, .. } => {
                if sigma.nrows() != p || sigma.ncols() != p {
                    return Err(crate::error::dim_mismatch(
                        format!("{p}x{p} covariance"),
                        format!("{}x{}", sigma.nrows(), sigma.ncols()),
                    ));
                }
                if r == 0 || r > p {
                    return Err(Error::BadRank { rank: r, dim: p });
                }
                singularize(sigma, r)?
            }
        };
        Ok(PopulationModel::with_unit_mean(sigma, format!("{}-r{r}", self.label())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub rank_grid: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub model: CovarianceModel,
    pub tasks: Vec<Task>,
    /// Estimators evaluated per task, reference excluded.
    pub estimators: BTreeMap<Task, Vec<EstimatorSpec>>,
    pub references: BTreeMap<Task, EstimatorSpec>,
    pub centering: Centering,
    pub threads: usize,
}

/// `1..=min(n−5, p)`.
pub fn default_rank_grid(n: usize, p: usize) -> Vec<usize> {
    (1..=n.saturating_sub(5).min(p)).collect()
}

fn stepped_grid(n: usize, p: usize, step: usize) -> Vec<usize> {
    let top = n.saturating_sub(5).min(p);
    let mut grid: Vec<usize> = (step..=top).step_by(step).collect();
    if grid.last() != Some(&top) {
        grid.push(top);
    }
    grid
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 6] = [
    "ar-150-100",
    "ar-200-100",
    "ar-200-150",
    "ar-250-150",
    "nasdaq",
    "small",
];

impl ExperimentConfig {
    /// AR(0.5) model, all tasks, default estimators and references.
    pub fn new(n: usize, p: usize) -> Self {
        let mut estimators = BTreeMap::new();
        let mut references = BTreeMap::new();
        for task in Task::ALL {
            estimators.insert(
                task,
                task.default_estimators()
                    .into_iter()
                    .map(EstimatorSpec::preset)
                    .collect(),
            );
            references.insert(task, EstimatorSpec::preset(task.default_reference()));
        }
        Self {
            n,
            p,
            rank_grid: default_rank_grid(n, p),
            reps: 1000,
            master_seed: DEFAULT_SEED,
            model: CovarianceModel::Ar { rho: 0.5 },
            tasks: Task::ALL.to_vec(),
            estimators,
            references,
            centering: Centering::Centered,
            threads: 1,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let ar = |n, p| {
            let mut c = Self::new(n, p);
            c.rank_grid = stepped_grid(n, p, 5);
            c
        };
        Ok(match name {
            "ar-150-100" => ar(150, 100),
            "ar-200-100" => ar(200, 100),
            "ar-200-150" => ar(200, 150),
            "ar-250-150" => ar(250, 150),
            "nasdaq" => {
                let mut c = ar(167, 107);
                c.model = CovarianceModel::Fixed {
                    label: "nasdaq-synthetic".into(),
                    sigma: nasdaq_like_covariance()?,
                };
                c
            }
            "small" => {
                let mut c = Self::new(60, 40);
                c.rank_grid = vec![20];
                c.reps = 2000;
                c
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::InvalidParameter("reps must be at least 2".into()));
        }
        if self.n < 2 || self.p == 0 {
            return Err(Error::InvalidParameter(format!(
                "need n >= 2 and p >= 1, got n={} p={}",
                self.n, self.p
            )));
        }
        if self.rank_grid.is_empty() {
            return Err(Error::InvalidParameter("empty rank grid".into()));
        }
        if self.rank_grid.iter().any(|&r| r >= 1 << 24) {
            return Err(Error::InvalidParameter("rank too large".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        if let CovarianceModel::Ar { rho } = self.model {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "AR coefficient {rho} must lie in (0, 1)"
                )));
            }
        }
        for task in &self.tasks {
            if !self.references.contains_key(task) {
                return Err(Error::InvalidParameter(format!("no reference for {task}")));
            }
            let specs = self.estimators.get(task).into_iter().flatten();
            for spec in specs.chain(self.references.get(task)) {
                if spec.task != *task {
                    return Err(Error::TaskMismatch {
                        estimator: spec.id.clone(),
                        expected: task.to_string(),
                        actual: spec.task.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Reference first, then the task's estimators without duplicates.
    fn specs_for(&self, task: Task) -> Vec<EstimatorSpec> {
        let mut specs: Vec<EstimatorSpec> = self.references.get(&task).cloned().into_iter().collect();
        for spec in self.estimators.get(&task).into_iter().flatten() {
            if !specs.iter().any(|s| s.id == spec.id) {
                specs.push(spec.clone());
            }
        }
        specs
    }

    /// Rank of the sample covariance when the population rank is `r`.
    pub fn sample_rank(&self, r: usize) -> usize {
        match self.centering {
            Centering::Centered => r.min(self.n - 1),
            Centering::Uncentered => r.min(self.n),
        }
    }

    /// Applies `key = value` lines. A `preset` line resets everything set
    /// before it; blank lines and `#` comments are ignored.
    ///
    /// Keys: `preset`, `n`, `p`, `ranks` (`10,40,70`, `1..95` or `5..95:5`),
    /// `reps`, `seed`, `model` (`ar` or a covariance CSV path), `rho`,
    /// `tasks`, `estimators.<task>`, `reference.<task>`, `uncentered`,
    /// `threads`.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut config = Self::new(150, 100);
        config.apply_kv_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `key = value` lines on top of the current settings.
    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        let config = self;
        let mut explicit_grid = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx as u64 + 1,
                column: 1,
                message: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            config
                .set(key, value)
                .map_err(|e| Error::Parse {
                    line: idx as u64 + 1,
                    column: 1,
                    message: e.to_string(),
                })?;
            match key {
                "ranks" => explicit_grid = true,
                "preset" => explicit_grid = false,
                _ => {}
            }
            if !explicit_grid && (key == "n" || key == "p") {
                config.rank_grid = default_rank_grid(config.n, config.p);
            }
        }
        Ok(())
    }

    /// Sets one option by key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidParameter(format!("bad {what} `{value}`"));
        match key {
            "preset" => *self = Self::preset(value)?,
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "p" => self.p = value.parse().map_err(|_| bad("p"))?,
            "ranks" => self.rank_grid = parse_rank_grid(value)?,
            "reps" => self.reps = value.parse().map_err(|_| bad("reps"))?,
            "seed" => self.master_seed = value.parse().map_err(|_| bad("seed"))?,
            "threads" => self.threads = value.parse().map_err(|_| bad("threads"))?,
            "rho" => {
                let rho = value.parse().map_err(|_| bad("rho"))?;
                self.model = CovarianceModel::Ar { rho };
            }
            "model" => {
                self.model = if value == "ar" {
                    match self.model {
                        CovarianceModel::Ar { .. } => self.model.clone(),
                        _ => CovarianceModel::Ar { rho: 0.5 },
                    }
                } else {
                    let path = PathBuf::from(value);
                    CovarianceModel::Fixed {
                        label: path.display().to_string(),
                        sigma: crate::io::read_matrix_csv(&path)?,
                    }
                }
            }
            "uncentered" => {
                self.centering = match value {
                    "true" | "yes" | "1" => Centering::Uncentered,
                    "false" | "no" | "0" => Centering::Centered,
                    _ => return Err(bad("flag")),
                }
            }
            "tasks" => {
                self.tasks = value
                    .split(',')
                    .map(Task::from_str)
                    .collect::<Result<_>>()?
            }
            _ => {
                if let Some(task) = key.strip_prefix("estimators.") {
                    let task = Task::from_str(task)?;
                    let specs = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(EstimatorSpec::from_id)
                        .collect::<Result<_>>()?;
                    self.estimators.insert(task, specs);
                } else if let Some(task) = key.strip_prefix("reference.") {
                    let task = Task::from_str(task)?;
                    self.references.insert(task, EstimatorSpec::from_id(value)?);
                } else {
                    return Err(Error::InvalidParameter(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }
}

/// Parses `10,40,70`, `1..95` or `5..95:5`.
pub fn parse_rank_grid(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidParameter(format!("bad rank grid `{text}`"));
    let mut grid = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, rest)) = part.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((hi, step)) => (hi, step.trim().parse::<usize>().map_err(|_| bad())?),
                None => (rest, 1),
            };
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if step == 0 || lo > hi {
                return Err(bad());
            }
            grid.extend((lo..=hi).step_by(step));
        } else {
            grid.push(part.parse().map_err(|_| bad())?);
        }
    }
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

/// Covariance of a synthetic 107-asset, 167-return panel.
pub fn nasdaq_like_covariance() -> Result<DMatrix<f64>> {
    let panel = ingest::synthetic_price_panel(107, 168, 60, 2016);
    let returns = ingest::net_returns(&panel)?;
    ingest::covariance_from_returns(&returns)
}

fn task_index(task: Task) -> u64 {
    match task {
        Task::Covariance => 0,
        Task::Precision => 1,
        Task::Discriminant => 2,
    }
}

/// Substream id of one replication.
pub fn stream_id(task: Task, r: usize, rep: usize) -> u64 {
    (task_index(task) << 56) | ((r as u64) << 32) | rep as u64
}

/// The dataset every estimator sees in replication `rep` of cell `(task, r)`.
pub fn replication_dataset(
    config: &ExperimentConfig,
    model: &PopulationModel,
    task: Task,
    r: usize,
    rep: usize,
) -> DMatrix<f64> {
    let mut rng = substream(config.master_seed, stream_id(task, r, rep));
    sample_singular_mvn(model, config.n, &mut rng)
}

/// FNV-1a over the bit patterns of the entries.
pub fn dataset_fingerprint(x: &DMatrix<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in x.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Known-truth quantities for computing losses.
struct Truth {
    model: PopulationModel,
    sigma_pinv: DMatrix<f64>,
    eta: DVector<f64>,
    pinv_sq_trace: f64,
}

impl Truth {
    fn new(model: PopulationModel) -> Self {
        let sigma_pinv = model.sigma().pseudoinverse();
        let eta = &sigma_pinv * model.mu();
        let pinv_sq_trace = model.sigma().pinv_power_trace(2);
        Self {
            model,
            sigma_pinv,
            eta,
            pinv_sq_trace,
        }
    }

    fn sigma(&self) -> &SpectralDecomposition {
        self.model.sigma()
    }
}

/// One estimator on one dataset.
#[derive(Debug, Clone, Copy)]
struct Evaluation {
    loss: f64,
    /// Loss shifted by the estimator-independent constant the URE omits.
    adjusted: f64,
    ure: Option<f64>,
}

fn evaluate(
    spec: &EstimatorSpec,
    stats: &SampleStatistics,
    truth: &Truth,
    with_ure: bool,
) -> Result<Evaluation> {
    let (loss, adjusted) = match estimate(spec, stats)? {
        Estimate::Matrix(m) => match spec.task {
            Task::Covariance => {
                let l = invariant_squared_loss(&m, truth.sigma())?;
                (l, l)
            }
            _ => {
                let l = frobenius_loss(&m, &truth.sigma_pinv)?;
                (l, l - truth.pinv_sq_trace)
            }
        },
        Estimate::Vector(v) => {
            let l = squared_loss(&v, &truth.eta)?;
            (l, l - truth.eta.norm_squared())
        }
    };
    let ure = if with_ure {
        let rule = spec
            .resolve(stats.n, stats.rank())?
            .rule(spec.task)
            .ok_or_else(|| Error::UnsupportedFamily(format!("{} has no URE", spec.id)))?;
        let value = match spec.task {
            Task::Covariance => {
                ure_covariance(&stats.s_dec, &rule, stats.n, Differentiation::AllowNumeric)?
            }
            Task::Precision => ure_precision(&stats.s_dec, &rule, stats.n)?,
            Task::Discriminant => ure_discriminant(&stats.s_dec, &rule, &stats.x_bar, stats.n)?,
        };
        Some(value.value)
    } else {
        None
    };
    Ok(Evaluation {
        loss,
        adjusted,
        ure,
    })
}

/// Everything computed in one replication.
#[derive(Debug)]
pub struct ReplicationOutcome {
    pub fingerprint: u64,
    /// `(estimator id, loss)` in evaluation order.
    pub losses: Vec<(String, Result<f64>)>,
}

struct CellRun {
    fingerprints: Vec<u64>,
    /// `[rep][estimator]`.
    evaluations: Vec<Vec<Result<Evaluation>>>,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn run_replication(
    config: &ExperimentConfig,
    truth: &Truth,
    task: Task,
    r: usize,
    rep: usize,
    specs: &[EstimatorSpec],
    with_ure: bool,
) -> (u64, Vec<Result<Evaluation>>) {
    let x = replication_dataset(config, &truth.model, task, r, rep);
    let fingerprint = dataset_fingerprint(&x);
    let evals = match sample_statistics_with(&x, config.centering) {
        Ok(stats) => specs
            .iter()
            .map(|spec| evaluate(spec, &stats, truth, with_ure))
            .collect(),
        Err(e) => specs
            .iter()
            .map(|_| Err(Error::InsufficientData(format!("replication {rep}: {e}"))))
            .collect(),
    };
    (fingerprint, evals)
}

fn run_cell(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
    truth: &Truth,
    task: Task,
    r: usize,
    specs: &[EstimatorSpec],
    with_ure: bool,
) -> CellRun {
    let results: Vec<(u64, Vec<Result<Evaluation>>)> = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| run_replication(config, truth, task, r, rep, specs, with_ure))
            .collect()
    });
    let (fingerprints, evaluations) = results.into_iter().unzip();
    CellRun {
        fingerprints,
        evaluations,
    }
}

/// Losses of every configured estimator in one replication, for auditing
/// the common-random-numbers contract.
pub fn replication_outcome(
    config: &ExperimentConfig,
    task: Task,
    r: usize,
    rep: usize,
) -> Result<ReplicationOutcome> {
    config.validate()?;
    let truth = Truth::new(config.model.population(config.p, r)?);
    let specs = config.specs_for(task);
    let (fingerprint, evals) = run_replication(config, &truth, task, r, rep, &specs, false);
    Ok(ReplicationOutcome {
        fingerprint,
        losses: specs
            .iter()
            .zip(evals)
            .map(|(s, e)| (s.id.clone(), e.map(|v| v.loss)))
            .collect(),
    })
}

/// Checks the cell precondition; `Err` carries the reason it is skipped.
fn prepare_cell(config: &ExperimentConfig, specs: &[EstimatorSpec], r: usize) -> Result<Truth> {
    if r == 0 || r > config.p {
        return Err(Error::BadRank {
            rank: r,
            dim: config.p,
        });
    }
    let sample_rank = config.sample_rank(r);
    for spec in specs {
        spec.resolve(config.n, sample_rank)?;
    }
    Ok(Truth::new(config.model.population(config.p, r)?))
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrialRecord {
    pub task: Task,
    pub estimator: String,
    pub n: usize,
    pub p: usize,
    pub r: usize,
    pub reps: usize,
    pub mean_loss: f64,
    pub se_loss: f64,
    pub prial: f64,
    pub skipped: bool,
    pub note: Option<String>,
}

impl PrialRecord {
    fn skipped(config: &ExperimentConfig, task: Task, estimator: &str, r: usize, why: &Error) -> Self {
        Self {
            task,
            estimator: estimator.to_string(),
            n: config.n,
            p: config.p,
            r,
            reps: 0,
            mean_loss: f64::NAN,
            se_loss: f64::NAN,
            prial: f64::NAN,
            skipped: true,
            note: Some(why.to_string()),
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.task,
            self.estimator,
            self.n,
            self.p,
            self.r,
            self.reps,
            format_f64(self.mean_loss),
            format_f64(self.se_loss),
            format_f64(self.prial),
            self.skipped
        )
    }
}

/// Runs every `(task, r)` cell. Configuration errors are returned; errors
/// inside a cell become skipped records.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PrialRecord>> {
    run_experiment_with_progress(config, |_, _| {})
}

/// As [`run_experiment`], calling `progress(task, r)` after each cell.
pub fn run_experiment_with_progress(
    config: &ExperimentConfig,
    mut progress: impl FnMut(Task, usize),
) -> Result<Vec<PrialRecord>> {
    config.validate()?;
    let pool = thread_pool(config.threads)?;
    let mut records = Vec::new();
    for &task in &config.tasks {
        let specs = config.specs_for(task);
        for &r in &config.rank_grid {
            let truth = match prepare_cell(config, &specs, r) {
                Ok(t) => t,
                Err(e) => {
                    records.push(PrialRecord::skipped(config, task, "*", r, &e));
                    progress(task, r);
                    continue;
                }
            };
            let cell = run_cell(config, &pool, &truth, task, r, &specs, false);
            records.extend(aggregate_prial(config, task, r, &specs, &cell));
            progress(task, r);
        }
    }
    Ok(records)
}

fn column(cell: &CellRun, j: usize) -> Result<Vec<Evaluation>> {
    cell.evaluations
        .iter()
        .map(|row| row[j].as_ref().copied().map_err(clone_error))
        .collect()
}

fn clone_error(e: &Error) -> Error {
    Error::InvalidParameter(e.to_string())
}

fn aggregate_prial(
    config: &ExperimentConfig,
    task: Task,
    r: usize,
    specs: &[EstimatorSpec],
    cell: &CellRun,
) -> Vec<PrialRecord> {
    let summaries: Vec<Result<(f64, f64)>> = (0..specs.len())
        .map(|j| {
            column(cell, j).map(|evals| {
                let losses: Vec<f64> = evals.iter().map(|e| e.loss).collect();
                mean_se(&losses)
            })
        })
        .collect();
    let reference = summaries[0].as_ref().ok().map(|s| s.0);
    specs
        .iter()
        .zip(&summaries)
        .map(|(spec, summary)| match summary {
            Ok((mean, se)) => PrialRecord {
                task,
                estimator: spec.id.clone(),
                n: config.n,
                p: config.p,
                r,
                reps: config.reps,
                mean_loss: *mean,
                se_loss: *se,
                prial: reference
                    .and_then(|m| prial(m, *mean).ok())
                    .unwrap_or(f64::NAN),
                skipped: false,
                note: None,
            },
            Err(e) => PrialRecord::skipped(config, task, &spec.id, r, e),
        })
        .collect()
}

/// Writes the results CSV with a leading `# seed=...` comment.
pub fn write_records_csv<W: Write>(
    mut out: W,
    config: &ExperimentConfig,
    records: &[PrialRecord],
) -> Result<()> {
    writeln!(
        out,
        "# seed={} model={} centering={:?}",
        config.master_seed,
        config.model.label(),
        config.centering
    )?;
    writeln!(out, "{RESULTS_HEADER}")?;
    for rec in records {
        writeln!(out, "{}", rec.csv_line())?;
    }
    out.flush()?;
    Ok(())
}

/// Mean URE against mean adjusted loss for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct UreRecord {
    pub task: Task,
    pub estimator: String,
    pub r: usize,
    pub reps: usize,
    pub mean_ure: f64,
    pub mean_adjusted_loss: f64,
    /// Standard error of the paired difference `URE − adjusted loss`.
    pub se_diff: f64,
    pub z: f64,
    pub skipped: bool,
    pub note: Option<String>,
}

pub const URE_HEADER: &str = "task,estimator,r,reps,mean_ure,mean_adjusted_loss,se_diff,z,skipped";

impl UreRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.task,
            self.estimator,
            self.r,
            self.reps,
            format_f64(self.mean_ure),
            format_f64(self.mean_adjusted_loss),
            format_f64(self.se_diff),
            format_f64(self.z),
            self.skipped
        )
    }
}

fn paired_z(diffs: &[f64]) -> (f64, f64, f64) {
    let (mean, se) = mean_se(diffs);
    let z = if se > 0.0 {
        mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    (mean, se, z)
}

/// URE validation over the configured estimators and references that have a
/// closed-form eigenvalue map.
///
/// The adjusted loss subtracts `tr(Σ⁺²)` for precision and `‖Σ⁺μ‖²` for the
/// discriminant task.
pub fn ure_validation(config: &ExperimentConfig) -> Result<Vec<UreRecord>> {
    config.validate()?;
    let pool = thread_pool(config.threads)?;
    let mut out = Vec::new();
    for &task in &config.tasks {
        let specs: Vec<EstimatorSpec> = config
            .specs_for(task)
            .into_iter()
            .filter(|s| !matches!(s.family, crate::estimators::Family::Diagonal))
            .filter(|s| !matches!(s.family, crate::estimators::Family::Preset(p) if matches!(p, Preset::Diag | Preset::DiagInv | Preset::DiagDisc)))
            .collect();
        for &r in &config.rank_grid {
            let skipped = |estimator: &str, e: &Error| UreRecord {
                task,
                estimator: estimator.to_string(),
                r,
                reps: 0,
                mean_ure: f64::NAN,
                mean_adjusted_loss: f64::NAN,
                se_diff: f64::NAN,
                z: f64::NAN,
                skipped: true,
                note: Some(e.to_string()),
            };
            let truth = match prepare_cell(config, &specs, r) {
                Ok(t) => t,
                Err(e) => {
                    out.push(skipped("*", &e));
                    continue;
                }
            };
            let cell = run_cell(config, &pool, &truth, task, r, &specs, true);
            for (j, spec) in specs.iter().enumerate() {
                match column(&cell, j) {
                    Ok(evals) => {
                        let ures: Vec<f64> = evals.iter().map(|e| e.ure.unwrap_or(f64::NAN)).collect();
                        let adj: Vec<f64> = evals.iter().map(|e| e.adjusted).collect();
                        let diffs: Vec<f64> = ures.iter().zip(&adj).map(|(u, a)| u - a).collect();
                        let (_, se, z) = paired_z(&diffs);
                        out.push(UreRecord {
                            task,
                            estimator: spec.id.clone(),
                            r,
                            reps: config.reps,
                            mean_ure: mean_se(&ures).0,
                            mean_adjusted_loss: mean_se(&adj).0,
                            se_diff: se,
                            z,
                            skipped: false,
                            note: None,
                        });
                    }
                    Err(e) => out.push(skipped(&spec.id, &e)),
                }
            }
        }
    }
    Ok(out)
}

/// Paired comparison `loss(better) − loss(worse)` under common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct DominationRecord {
    pub task: Task,
    pub r: usize,
    pub better: String,
    pub worse: String,
    pub reps: usize,
    pub mean_diff: f64,
    pub se_diff: f64,
    pub z: f64,
    pub skipped: bool,
    pub note: Option<String>,
}

pub const DOMINATION_HEADER: &str = "task,r,better,worse,reps,mean_diff,se_diff,z,skipped";

impl DominationRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.task,
            self.r,
            self.better,
            self.worse,
            self.reps,
            format_f64(self.mean_diff),
            format_f64(self.se_diff),
            format_f64(self.z),
            self.skipped
        )
    }

    /// Negative mean difference with `|z| > threshold`.
    pub fn dominates(&self, threshold: f64) -> bool {
        !self.skipped && self.mean_diff < 0.0 && self.z.abs() > threshold
    }
}

impl fmt::Display for DominationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<12} r={:<4} {:>13} - {:<13} {:>12.5e} (se {:.3e}, z {:.2})",
            self.task, self.r, self.better, self.worse, self.mean_diff, self.se_diff, self.z
        )
    }
}

/// `(better, worse)` pairs checked for each task.
pub fn domination_chain(task: Task) -> [(Preset, Preset); 3] {
    use Preset::*;
    match task {
        Task::Covariance => [(Hf1, Sample), (Sample, UnbiasedCov), (Hf2, Hf1)],
        Task::Precision => [(Em1, UnbiasedPrec), (UnbiasedPrec, NaivePrec), (Em2, Em1)],
        Task::Discriminant => [(Tk1, UnbiasedDisc), (UnbiasedDisc, NaiveDisc), (Tk2, Tk1)],
    }
}

/// Paired differences for every chain link of the configured tasks. The
/// estimator lists in `config` are not used.
pub fn domination_report(config: &ExperimentConfig) -> Result<Vec<DominationRecord>> {
    config.validate()?;
    let pool = thread_pool(config.threads)?;
    let mut out = Vec::new();
    for &task in &config.tasks {
        let chain = domination_chain(task);
        let mut presets: Vec<Preset> = Vec::new();
        for (a, b) in chain {
            for p in [a, b] {
                if !presets.contains(&p) {
                    presets.push(p);
                }
            }
        }
        let specs: Vec<EstimatorSpec> = presets.iter().copied().map(EstimatorSpec::preset).collect();
        let index = |p: Preset| presets.iter().position(|&q| q == p).expect("in chain");
        for &r in &config.rank_grid {
            let record = |better: Preset, worse: Preset| DominationRecord {
                task,
                r,
                better: better.id().into(),
                worse: worse.id().into(),
                reps: 0,
                mean_diff: f64::NAN,
                se_diff: f64::NAN,
                z: f64::NAN,
                skipped: true,
                note: None,
            };
            let truth = match prepare_cell(config, &specs, r) {
                Ok(t) => t,
                Err(e) => {
                    for (a, b) in chain {
                        out.push(DominationRecord {
                            note: Some(e.to_string()),
                            ..record(a, b)
                        });
                    }
                    continue;
                }
            };
            let cell = run_cell(config, &pool, &truth, task, r, &specs, false);
            for (a, b) in chain {
                let pair = column(&cell, index(a)).and_then(|x| Ok((x, column(&cell, index(b))?)));
                match pair {
                    Ok((xa, xb)) => {
                        let diffs: Vec<f64> =
                            xa.iter().zip(&xb).map(|(u, v)| u.loss - v.loss).collect();
                        let (mean, se, z) = paired_z(&diffs);
                        out.push(DominationRecord {
                            reps: config.reps,
                            mean_diff: mean,
                            se_diff: se,
                            z,
                            skipped: false,
                            ..record(a, b)
                        });
                    }
                    Err(e) => out.push(DominationRecord {
                        note: Some(e.to_string()),
                        ..record(a, b)
                    }),
                }
            }
        }
    }
    Ok(out)
}

/// Dataset fingerprints of a cell, in replication order.
pub fn cell_fingerprints(config: &ExperimentConfig, task: Task, r: usize) -> Result<Vec<u64>> {
    config.validate()?;
    let pool = thread_pool(config.threads)?;
    let truth = Truth::new(config.model.population(config.p, r)?);
    Ok(run_cell(config, &pool, &truth, task, r, &[], false).fingerprints)
}
