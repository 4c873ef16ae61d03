//! Command-line front end: dataset conversion, training with in-process or
//! TCP workers, regularization paths and evaluation.

pub mod model;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use dglmnet::driver::{fit, fit_local, FitOutcome, FitReport};
use dglmnet::glm::{negated_log_likelihood, objective};
use dglmnet::ingest::{
    convert_to_by_feature, load_dataset, load_worker, partition_features, read_by_example, read_manifest,
    write_by_example, ExampleSet, ParsedDataset,
};
use dglmnet::metrics::evaluate;
use dglmnet::regpath::{regularization_path_local, write_path_csv, PathConfig};
use dglmnet::synth::{generate, train_test_split, SynthSpec};
use dglmnet::{nnz, Error, ErrorKind, LineSearchConfig, Result, SolverConfig, TcpGroup, TcpOptions};

use model::{read_model, write_model, Model};

pub const TEST_FILE: &str = "test.txt";

#[derive(Debug, Parser)]
#[command(name = "dglmnet", version, about = "Distributed L1-regularized logistic regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a by-example dataset (or a synthetic one) into feature shards.
    Convert(ConvertArgs),
    /// Fit one model.
    Train(TrainArgs),
    /// Run one rank of a TCP training job.
    Worker(TrainArgs),
    /// Fit the warm-started regularization path.
    Path(PathArgs),
    /// Score a model on a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// By-example input, one `<label> <j>:<v> ...` record per line.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    input: Option<PathBuf>,
    /// Generate data instead: `n,p,informative,seed`.
    #[arg(long)]
    synth: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    shards: usize,
    /// Fraction of examples (taken from the end) written to `<out>/test.txt`
    /// instead of the shards.
    #[arg(long, default_value_t = 0.0)]
    test_fraction: f64,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    nu: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    full_step_tol: f64,
}

impl SolverArgs {
    fn config(&self, lambda: f64) -> SolverConfig {
        SolverConfig {
            lambda,
            nu: self.nu,
            line_search: LineSearchConfig::default(),
            max_outer_iterations: self.max_iter,
            rel_objective_tol: self.rel_tol,
            final_full_step_tol: self.full_step_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Transport {
    Local,
    Tcp,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory written by `convert`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    lambda: f64,
    /// In-process workers; must equal the number of shards (default: all).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Transport::Local)]
    transport: Transport,
    /// `host:port` bound by rank 0 and dialled by the others.
    #[arg(long)]
    coordinator: Option<String>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    world: Option<usize>,
    /// Seconds to wait for peers.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Model file (written by rank 0 only in TCP mode).
    #[arg(long)]
    out: PathBuf,
    /// Fit report CSV; defaults to the model path with extension `report.csv`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct PathArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Comma-separated, strictly decreasing λ values replacing the schedule.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// By-example evaluation set scored at every point.
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory written by `convert`.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    data: Option<PathBuf>,
    /// By-example file.
    #[arg(long)]
    input: Option<PathBuf>,
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Communication => 4,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Usage => "usage",
        ErrorKind::Data => "data",
        ErrorKind::Numerical => "numerical",
        ErrorKind::Communication => "communication",
    }
}

/// The single diagnostic line printed for a failed run.
pub fn error_line(kind: ErrorKind, message: &str) -> String {
    serde_json::json!({
        "error": kind_name(kind),
        "exit_code": exit_code(kind),
        "message": message,
    })
    .to_string()
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", error_line(ErrorKind::Usage, first.trim_start_matches("error: ")));
            return 1;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            exit_code(e.kind())
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Convert(args) => convert(args),
        Command::Train(args) => train(args),
        Command::Worker(mut args) => {
            args.transport = Transport::Tcp;
            train(args)
        }
        Command::Path(args) => path(args),
        Command::Eval(args) => eval(args),
    }
}

fn usage(message: impl Into<String>) -> Error {
    Error::InvalidInput(message.into())
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn parse_synth(spec: &str) -> Result<SynthSpec> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || usage(format!("--synth expects n,p,informative,seed, got {spec:?}"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let n: usize = parts[0].parse().map_err(|_| bad())?;
    let p: usize = parts[1].parse().map_err(|_| bad())?;
    let informative: usize = parts[2].parse().map_err(|_| bad())?;
    let seed: u64 = parts[3].parse().map_err(|_| bad())?;
    if n == 0 || p == 0 || informative > p {
        return Err(bad());
    }
    Ok(SynthSpec::new(n, p, informative, seed))
}

fn convert(args: ConvertArgs) -> Result<()> {
    info!("resolved configuration: convert {args:?}");
    if args.shards == 0 {
        return Err(usage("--shards must be at least 1"));
    }
    if !(0.0..1.0).contains(&args.test_fraction) {
        return Err(usage(format!("--test-fraction must be in [0, 1), got {}", args.test_fraction)));
    }
    let data: ParsedDataset = match (&args.input, &args.synth) {
        (Some(input), None) => read_by_example(input)?,
        (None, Some(spec)) => generate(&parse_synth(spec)?).data,
        _ => return Err(usage("exactly one of --input and --synth is required")),
    };
    let (train, test) = if args.test_fraction > 0.0 {
        let (train, test) = train_test_split(&data, args.test_fraction);
        (train, Some(test))
    } else {
        (data, None)
    };
    if train.n == 0 {
        return Err(Error::Degenerate("no training examples left after the split".into()));
    }
    let partition = partition_features(&train.nnz_per_feature(), args.shards)?;
    let manifest = convert_to_by_feature(&train, &partition, &args.out)?;
    if let Some(test) = test {
        write_by_example(&test.records, &args.out.join(TEST_FILE))?;
    }
    info!(
        "wrote {} shards: n = {}, p = {}, nnz = {}",
        manifest.shards, manifest.n, manifest.p, manifest.nnz
    );
    Ok(())
}

fn report_path(args: &TrainArgs) -> PathBuf {
    args.report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.csv"))
}

fn write_report(path: &Path, report: &FitReport) -> Result<()> {
    let io = io_error(path);
    let mut w = BufWriter::new(File::create(path).map_err(&io)?);
    writeln!(w, "iter,f,alpha,nnz,seconds").map_err(&io)?;
    for r in &report.iterations {
        writeln!(w, "{},{:?},{:?},{},{:.6}", r.iteration, r.objective, r.alpha, r.nnz, r.seconds).map_err(&io)?;
    }
    w.flush().map_err(&io)
}

fn summary(outcome: &FitOutcome) -> String {
    let r = &outcome.report;
    serde_json::json!({
        "lambda": r.lambda,
        "initial_objective": r.initial_objective,
        "final_objective": r.final_objective,
        "iterations": r.iterations.len(),
        "termination": r.termination,
        "full_step_restored": r.full_step_restored,
        "nnz": nnz(&outcome.beta),
        "seconds": r.seconds,
    })
    .to_string()
}

fn train(args: TrainArgs) -> Result<()> {
    let config = args.solver.config(args.lambda);
    config.validate()?;
    info!(
        "resolved configuration: train {args:?}; solver {}",
        serde_json::to_string(&config).unwrap_or_default()
    );
    let (outcome, writes) = match args.transport {
        Transport::Local => {
            if args.coordinator.is_some() || args.rank.is_some() || args.world.is_some() {
                return Err(usage("--coordinator, --rank and --world need --transport tcp"));
            }
            let data = load_dataset(&args.data)?;
            let workers = args.workers.unwrap_or(data.manifest.shards);
            if workers != data.manifest.shards {
                return Err(usage(format!(
                    "--workers {workers} does not match the {} shards in {}; convert again with --shards {workers}",
                    data.manifest.shards,
                    args.data.display()
                )));
            }
            (fit_local(&data.shards, &data.labels, &config, None)?, true)
        }
        Transport::Tcp => {
            let (Some(coordinator), Some(rank), Some(world)) = (&args.coordinator, args.rank, args.world) else {
                return Err(usage("TCP training needs --coordinator, --rank and --world"));
            };
            if args.workers.is_some_and(|w| w != world) {
                return Err(usage("--workers and --world disagree"));
            }
            let manifest = read_manifest(&args.data)?;
            if manifest.shards != world {
                return Err(usage(format!(
                    "--world {world} does not match the {} shards in {}",
                    manifest.shards,
                    args.data.display()
                )));
            }
            let worker = load_worker(&args.data, rank)?;
            let options = TcpOptions {
                timeout: Duration::from_secs(args.timeout),
            };
            let mut group = TcpGroup::join(coordinator, rank, world, manifest.n + manifest.p, options)?;
            let outcome = fit(&worker.shard, &worker.labels, &config, &mut group, None)?;
            group.finish()?;
            (outcome, rank == 0)
        }
    };
    if writes {
        write_model(
            &args.out,
            &Model {
                lambda: args.lambda,
                beta: outcome.beta.clone(),
            },
        )?;
        write_report(&report_path(&args), &outcome.report)?;
    }
    info!(
        "finished after {} iterations ({:?})",
        outcome.report.iterations.len(),
        outcome.report.termination
    );
    println!("{}", summary(&outcome));
    Ok(())
}

fn path(args: PathArgs) -> Result<()> {
    let solver = args.solver.config(0.0);
    let path_config = PathConfig {
        steps: args.steps,
        lambdas: args.lambdas.clone(),
    };
    info!(
        "resolved configuration: path {args:?}; solver {}; path {}",
        serde_json::to_string(&solver).unwrap_or_default(),
        serde_json::to_string(&path_config).unwrap_or_default()
    );
    if args.steps == 0 && args.lambdas.is_none() {
        return Err(usage("--steps must be at least 1"));
    }
    let data = load_dataset(&args.data)?;
    if args.workers.is_some_and(|w| w != data.manifest.shards) {
        return Err(usage(format!(
            "--workers does not match the {} shards in {}",
            data.manifest.shards,
            args.data.display()
        )));
    }
    let eval_set = match &args.eval {
        Some(p) => Some(ExampleSet::from_parsed(&read_by_example(p)?)),
        None => None,
    };
    let outcome = regularization_path_local(&data.shards, &data.labels, &solver, &path_config, eval_set.as_ref())?;
    let file = File::create(&args.out).map_err(io_error(&args.out))?;
    let mut w = BufWriter::new(file);
    write_path_csv(&outcome.points, &mut w).map_err(io_error(&args.out))?;
    w.flush().map_err(io_error(&args.out))?;
    info!("lambda_max = {:?}, {} points", outcome.lambda_max, outcome.points.len());
    match outcome.failure {
        // Points fitted before the failure are already on disk.
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    info!("resolved configuration: eval {args:?}");
    let model = read_model(&args.model)?;
    let (margins, labels) = match (&args.data, &args.input) {
        (Some(dir), None) => {
            let data = load_dataset(dir)?;
            let mut beta = model.beta.clone();
            beta.resize(data.manifest.p.max(beta.len()), 0.0);
            let mut margins = vec![0.0; data.manifest.n];
            for shard in &data.shards {
                shard.accumulate_margins(&beta, &mut margins);
            }
            (margins, data.labels)
        }
        (None, Some(file)) => {
            let set = ExampleSet::from_parsed(&read_by_example(file)?);
            (set.margins(&model.beta), set.labels().clone())
        }
        _ => return Err(usage("exactly one of --data and --input is required")),
    };
    let loss = negated_log_likelihood(&labels, &margins)?;
    let f = objective(loss, &model.beta, model.lambda)?;
    let metrics = evaluate(&margins, &labels)?;
    println!(
        "{}",
        serde_json::json!({
            "n": labels.len(),
            "lambda": model.lambda,
            "nnz": nnz(&model.beta),
            "loss": loss,
            "objective": f,
            "auprc": metrics.auprc,
            "log_loss": metrics.log_loss,
        })
    );
    Ok(())
}

/// Sets up logging to stderr at `info` unless `RUST_LOG` says otherwise.
pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
}
