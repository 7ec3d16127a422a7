//! `rankshrink` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime or data error.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rankshrink::harness::{
    self, default_rank_grid, parse_rank_grid, DEFAULT_SEED, DOMINATION_HEADER, URE_HEADER,
};
use rankshrink::ingest::{self, Divisor};
use rankshrink::io as csvio;
use rankshrink::model::{ar_covariance, sample_statistics_with, singularize};
use rankshrink::{
    Centering, CovarianceModel, Error, Estimate, EstimatorSpec, ExperimentConfig, SpectralDecomposition, Task,
};

#[derive(Parser, Debug)]
#[command(name = "rankshrink", version, about = "Shrinkage estimators for singular covariance models")]
struct Cli {
    /// Master seed; overrides config files and presets.
    #[arg(long, global = true, env = "RANKSHRINK_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo PRIAL study; writes the results CSV.
    Simulate(ExperimentArgs),
    /// Runs one estimator on an n×p data CSV.
    Estimate(EstimateArgs),
    /// Compares mean URE with mean adjusted loss.
    UreCheck(ExperimentArgs),
    /// Paired loss differences along the domination chains.
    Dominate(ExperimentArgs),
    /// Price panel to covariance CSV.
    Ingest(IngestArgs),
    /// Keeps the r largest eigenpairs of a covariance matrix.
    Singularize(SingularizeArgs),
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// One of ar-150-100, ar-200-100, ar-200-150, ar-250-150, nasdaq, small.
    #[arg(long)]
    preset: Option<String>,
    /// Key-value config file, applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Ranks as `10,40,70`, `1..95` or `5..95:5`.
    #[arg(long, visible_alias = "rank-grid")]
    ranks: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// `ar` or a covariance matrix CSV.
    #[arg(long)]
    model: Option<String>,
    /// AR coefficient; implies `--model ar`.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<String>>,
    /// Estimator ids; each replaces the list of its own task.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Reference estimator ids, at most one per task.
    #[arg(long, value_delimiter = ',')]
    reference: Option<Vec<String>>,
    /// Use XᵀX/n instead of the centered sample covariance.
    #[arg(long)]
    uncentered: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Data CSV, one observation per row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    estimator: String,
    #[arg(long)]
    uncentered: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DivisorArg {
    T,
    #[value(name = "t-minus-one")]
    TMinusOne,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Price CSV with a `date` column followed by one column per asset.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    prices: Option<PathBuf>,
    /// Generate a synthetic panel instead of reading one.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 107)]
    assets: usize,
    /// Fully quoted dates in the synthetic panel.
    #[arg(long, default_value_t = 168)]
    dates: usize,
    /// Leading dates on which the last synthetic asset is unquoted.
    #[arg(long, default_value_t = 60)]
    late: usize,
    #[arg(long, value_enum, default_value_t = DivisorArg::T)]
    divisor: DivisorArg,
    /// Also write the synthetic price panel here.
    #[arg(long)]
    write_prices: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SingularizeArgs {
    /// Covariance matrix CSV.
    #[arg(long, conflicts_with = "ar", required_unless_present = "ar")]
    input: Option<PathBuf>,
    /// Dimension of an AR covariance to start from instead.
    #[arg(long)]
    ar: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure category, mapped to the exit code.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(Error::Io(e))
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate(args) => simulate(cli.seed, args),
        Command::UreCheck(args) => ure_check(cli.seed, args),
        Command::Dominate(args) => dominate(cli.seed, args),
        Command::Estimate(args) => estimate(cli.seed, args),
        Command::Ingest(args) => ingest_prices(cli.seed, args),
        Command::Singularize(args) => singularize_matrix(cli.seed, args),
    }
}

fn announce_seed(seed: u64) {
    eprintln!("seed={seed}");
}

fn build_config(seed: Option<u64>, args: &ExperimentArgs) -> std::result::Result<ExperimentConfig, Failure> {
    let mut config = match &args.preset {
        Some(name) => ExperimentConfig::preset(name).map_err(usage)?,
        None => ExperimentConfig::new(150, 100),
    };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        config.apply_kv_str(&text).map_err(usage)?;
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(p) = args.p {
        config.p = p;
    }
    match &args.ranks {
        Some(text) => config.rank_grid = parse_rank_grid(text).map_err(usage)?,
        None if args.n.is_some() || args.p.is_some() => {
            config.rank_grid = default_rank_grid(config.n, config.p)
        }
        None => {}
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(model) = &args.model {
        if model == "ar" {
            if !matches!(config.model, CovarianceModel::Ar { .. }) {
                config.model = CovarianceModel::Ar { rho: 0.5 };
            }
        } else {
            let sigma = csvio::read_matrix_csv(model)?;
            config.model = CovarianceModel::Fixed {
                label: model.clone(),
                sigma,
            };
        }
    }
    if let Some(rho) = args.rho {
        config.model = CovarianceModel::Ar { rho };
    }
    if let Some(tasks) = &args.tasks {
        config.tasks = tasks
            .iter()
            .map(|t| Task::from_str(t))
            .collect::<Result<_, _>>()
            .map_err(usage)?;
    }
    if let Some(ids) = &args.estimators {
        let specs: Vec<EstimatorSpec> = ids
            .iter()
            .map(|id| EstimatorSpec::from_id(id))
            .collect::<Result<_, _>>()
            .map_err(usage)?;
        for task in Task::ALL {
            let mine: Vec<EstimatorSpec> = specs.iter().filter(|s| s.task == task).cloned().collect();
            if !mine.is_empty() {
                config.estimators.insert(task, mine);
            }
        }
    }
    if let Some(ids) = &args.reference {
        for id in ids {
            let spec = EstimatorSpec::from_id(id).map_err(usage)?;
            config.references.insert(spec.task, spec);
        }
    }
    if args.uncentered {
        config.centering = Centering::Uncentered;
    }
    config.threads = args.threads;
    config.validate().map_err(usage)?;
    Ok(config)
}

/// File at `path`, or standard output.
fn sink(path: &Option<PathBuf>) -> std::result::Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn header_comment(config: &ExperimentConfig) -> String {
    format!(
        "# seed={} n={} p={} reps={} model={} centering={:?}",
        config.master_seed,
        config.n,
        config.p,
        config.reps,
        config.model.label(),
        config.centering
    )
}

fn simulate(seed: Option<u64>, args: ExperimentArgs) -> Outcome {
    let config = build_config(seed, &args)?;
    announce_seed(config.master_seed);
    let cells = config.tasks.len() * config.rank_grid.len();
    let mut done = 0;
    let records = harness::run_experiment_with_progress(&config, |task, r| {
        done += 1;
        eprintln!("[{done}/{cells}] {task} r={r}");
    })?;
    let mut out = sink(&args.out)?;
    harness::write_records_csv(&mut out, &config, &records)?;
    drop(out);
    if args.out.is_some() {
        println!("seed={}", config.master_seed);
        println!("{:<13} {:<14} {:>5} {:>14} {:>12} {:>10}", "task", "estimator", "r", "mean_loss", "se", "prial");
        for rec in &records {
            if rec.skipped {
                println!(
                    "{:<13} {:<14} {:>5} skipped: {}",
                    rec.task.as_str(),
                    rec.estimator,
                    rec.r,
                    rec.note.as_deref().unwrap_or("")
                );
            } else {
                println!(
                    "{:<13} {:<14} {:>5} {:>14.6e} {:>12.4e} {:>10.3}",
                    rec.task.as_str(),
                    rec.estimator,
                    rec.r,
                    rec.mean_loss,
                    rec.se_loss,
                    rec.prial
                );
            }
        }
    }
    Ok(())
}

fn ure_check(seed: Option<u64>, args: ExperimentArgs) -> Outcome {
    let config = build_config(seed, &args)?;
    announce_seed(config.master_seed);
    let rows = harness::ure_validation(&config)?;
    let mut out = sink(&args.out)?;
    writeln!(out, "{}", header_comment(&config))?;
    writeln!(out, "{URE_HEADER}")?;
    for row in &rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    out.flush()?;
    drop(out);
    if args.out.is_some() {
        println!("seed={}", config.master_seed);
        for row in &rows {
            println!(
                "{:<13} {:<14} r={:<4} ure={:>12.5e} loss={:>12.5e} z={:>6.2}",
                row.task.as_str(),
                row.estimator,
                row.r,
                row.mean_ure,
                row.mean_adjusted_loss,
                row.z
            );
        }
    }
    Ok(())
}

fn dominate(seed: Option<u64>, args: ExperimentArgs) -> Outcome {
    let config = build_config(seed, &args)?;
    announce_seed(config.master_seed);
    let rows = harness::domination_report(&config)?;
    let mut out = sink(&args.out)?;
    writeln!(out, "{}", header_comment(&config))?;
    writeln!(out, "{DOMINATION_HEADER}")?;
    for row in &rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    out.flush()?;
    drop(out);
    if args.out.is_some() {
        println!("seed={}", config.master_seed);
        for row in &rows {
            println!("{row}");
        }
    }
    Ok(())
}

fn estimate(seed: Option<u64>, args: EstimateArgs) -> Outcome {
    announce_seed(seed.unwrap_or(DEFAULT_SEED));
    let spec = EstimatorSpec::from_id(&args.estimator).map_err(usage)?;
    if let Some(task) = &args.task {
        let task = Task::from_str(task).map_err(usage)?;
        if task != spec.task {
            return Err(usage(format!(
                "estimator `{}` is for the {} task, not {task}",
                spec.id, spec.task
            )));
        }
    }
    let centering = if args.uncentered {
        Centering::Uncentered
    } else {
        Centering::Centered
    };
    let x = csvio::read_data_csv(&args.input)?;
    let stats = sample_statistics_with(&x, centering)?;
    let comments = vec![format!(
        "estimator={} task={} n={} p={} rank={}",
        spec.id,
        spec.task,
        stats.n,
        stats.dim(),
        stats.rank()
    )];
    let out = sink(&args.out)?;
    match rankshrink::estimators::estimate(&spec, &stats)? {
        Estimate::Matrix(m) => csvio::write_matrix(out, &m, &comments)?,
        Estimate::Vector(v) => csvio::write_vector(out, &v, &comments)?,
    }
    Ok(())
}

fn ingest_prices(seed: Option<u64>, args: IngestArgs) -> Outcome {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    announce_seed(seed);
    let panel = match &args.prices {
        Some(path) => ingest::load_price_csv(path)?,
        None => ingest::synthetic_price_panel(args.assets, args.dates, args.late, seed),
    };
    if let Some(path) = &args.write_prices {
        ingest::write_price_csv(path, &panel)?;
    }
    let returns = ingest::net_returns(&panel)?;
    let divisor = match args.divisor {
        DivisorArg::T => Divisor::T,
        DivisorArg::TMinusOne => Divisor::TMinusOne,
    };
    let cov = ingest::covariance_from_returns_with(&returns, divisor)?;
    let comments = vec![format!(
        "seed={seed} assets={} returns={} first_complete_date={} dropped_dates={} divisor={divisor:?}",
        returns.assets.len(),
        returns.returns.nrows(),
        returns.start_policy.first_complete_date,
        returns.start_policy.dropped_dates
    )];
    csvio::write_matrix(sink(&args.out)?, &cov, &comments)?;
    if args.out.is_some() {
        let rank = SpectralDecomposition::new(&cov, None)?.rank();
        println!(
            "{} assets, {} returns from {} ({} dates dropped), numeric rank {rank}",
            returns.assets.len(),
            returns.returns.nrows(),
            returns.start_policy.first_complete_date,
            returns.start_policy.dropped_dates
        );
    }
    Ok(())
}

fn singularize_matrix(seed: Option<u64>, args: SingularizeArgs) -> Outcome {
    announce_seed(seed.unwrap_or(DEFAULT_SEED));
    let (sigma, source) = match (&args.input, args.ar) {
        (Some(path), _) => (csvio::read_matrix_csv(path)?, path.display().to_string()),
        (None, Some(p)) => {
            if !(args.rho > 0.0 && args.rho < 1.0) {
                return Err(usage(format!("--rho {} must lie in (0, 1)", args.rho)));
            }
            (ar_covariance(p, args.rho), format!("ar({}) p={p}", args.rho))
        }
        (None, None) => return Err(usage("one of --input or --ar is required")),
    };
    let dec = singularize(&sigma, args.rank)?;
    let comments = vec![format!("source={source} rank={}", dec.rank())];
    csvio::write_matrix(sink(&args.out)?, &dec.reconstruct(), &comments)?;
    if args.out.is_some() {
        println!("rank {} of {}", dec.rank(), display_path(&args.out));
    }
    Ok(())
}

fn display_path(p: &Option<PathBuf>) -> String {
    p.as_deref().map(Path::display).map(|d| d.to_string()).unwrap_or_default()
}
