use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rphedge::hedging::{solve, Algorithm, AlgorithmConfig, EtaRule, RunRecord, Sampling, StoppingCriteria, Termination};
use rphedge::hydro::HydroSpec;
use rphedge::problem::StochasticProblem;
use rphedge::prox::ProxSettings;
use rphedge::runtime::SimSchedule;
use serde::Serialize;

use crate::artifacts::{write_json, Manifest, ProblemInfo, Solution};
use crate::bench::{self, AggregateRow, RunSummary};
use crate::error::{Category, CliError, Result};
use crate::metrics;
use crate::problem_file::ProblemFile;
use crate::reference::{self, Reference, ReferenceMode};

#[derive(Debug, Parser)]
#[command(name = "rphedge", version, about = "Progressive Hedging and its randomized and asynchronous variants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem with one algorithm.
    Solve(SolveArgs),
    /// Repeat seeded runs per algorithm and aggregate the metric curves.
    Bench(BenchArgs),
    /// Write a generated problem file.
    #[command(subcommand)]
    Generate(Generate),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// uniform, p (proportional to scenario probabilities) or file:<path>.
    #[arg(long, default_value = "uniform")]
    pub sampling: String,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// unit, matched, fixed:<v> or theorem3:<c>,<tau>.
    #[arg(long, default_value = "unit")]
    pub eta: EtaRule,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Seconds, simulated seconds under a simulated schedule.
    #[arg(long, default_value_t = 3600.0)]
    pub max_time: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_subproblems: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_abs: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps_rel: f64,
    /// none, extensive-form or file:<path>.
    #[arg(long, default_value = "none")]
    pub reference: ReferenceMode,
    /// Schedule file for simulated time, or none for measured time.
    #[arg(long, default_value = "none")]
    pub sim_schedule: String,
    /// Updates in the randomized residual (default: number of scenarios).
    #[arg(long)]
    pub residual_window: Option<usize>,
    #[arg(long, default_value_t = rphedge::prox::DEFAULT_PROX_TOL)]
    pub prox_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',', default_value = "ph,rph,par,async")]
    pub algos: Vec<Algorithm>,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Repetition r uses seed `seed_base + r`.
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Repetitions run at once; needs simulated time or a single worker.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Generate {
    /// Hydro-thermal scheduling instance on a binary tree.
    Hydro(HydroArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HydroForm {
    /// Generator settings, expanded on load.
    Spec,
    /// Drawn coefficients.
    Params,
    /// Tree and scenario QPs written out.
    Explicit,
}

#[derive(Debug, Clone, Args)]
pub struct HydroArgs {
    #[arg(long, default_value_t = 2)]
    pub dams: usize,
    #[arg(long, default_value_t = 3)]
    pub stages: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub p_dry: Option<f64>,
    #[arg(long)]
    pub demand_per_dam: Option<f64>,
    #[arg(long, value_enum, default_value = "spec")]
    pub form: HydroForm,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = CliError::parse(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return err.category.exit_code();
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Generate(Generate::Hydro(args)) => cmd_generate(&args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.category.exit_code()
        }
    }
}

pub struct Loaded {
    pub problem: StochasticProblem,
    pub path: PathBuf,
    pub sha256: String,
}

pub fn load_problem(path: &Path) -> Result<Loaded> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let problem = ProblemFile::parse(text)?.to_problem()?;
    Ok(Loaded { problem, path: path.to_path_buf(), sha256: reference::sha256_hex(&bytes) })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{what} {}: {e}", path.display())))
}

pub fn parse_sampling(text: &str) -> Result<Sampling> {
    match text {
        "uniform" => Ok(Sampling::Uniform),
        "p" => Ok(Sampling::Proportional),
        _ => match text.strip_prefix("file:") {
            Some(path) => Ok(Sampling::Explicit(read_json(Path::new(path), "sampling law")?)),
            None => Err(CliError::parse(format!("expected uniform, p or file:<path>, got `{text}`"))),
        },
    }
}

pub fn parse_schedule(text: &str) -> Result<Option<SimSchedule>> {
    match text {
        "none" => Ok(None),
        path => Ok(Some(read_json(Path::new(path), "schedule")?)),
    }
}

impl RunArgs {
    /// The solver configuration, validated against the problem's tree.
    pub fn config(&self, problem: &StochasticProblem, seed: u64) -> Result<AlgorithmConfig> {
        let config = AlgorithmConfig {
            mu: self.mu,
            sampling: parse_sampling(&self.sampling)?,
            eta: self.eta,
            workers: self.workers,
            seed,
            stopping: StoppingCriteria {
                max_time: self.max_time,
                max_subproblems: self.max_subproblems,
                eps_abs: self.eps_abs,
                eps_rel: self.eps_rel,
            },
            prox: ProxSettings::with_tol(self.prox_tol),
            residual_window: self.residual_window,
            schedule: parse_schedule(&self.sim_schedule)?,
        };
        config.validate(problem.tree())?;
        Ok(config)
    }

    fn problem_info(&self, loaded: &Loaded) -> ProblemInfo {
        let tree = loaded.problem.tree();
        ProblemInfo {
            path: loaded.path.display().to_string(),
            sha256: loaded.sha256.clone(),
            num_scenarios: tree.num_scenarios(),
            stage_dims: tree.layout().stage_dims().to_vec(),
        }
    }

    fn reference(&self, loaded: &Loaded) -> Result<Reference> {
        reference::resolve(&self.reference, &loaded.problem, &loaded.path, &loaded.sha256)
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn failure_of(record: &RunRecord) -> Option<CliError> {
    match &record.termination {
        Termination::WorkerFailure { worker, scenario, message } => Some(CliError::new(
            Category::WorkerFailure,
            format!("worker {worker} failed on scenario {scenario}: {message}"),
        )),
        _ => None,
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let loaded = load_problem(&args.run.problem)?;
    let config = args.run.config(&loaded.problem, args.seed)?;
    let reference = args.run.reference(&loaded)?;
    create_dir(&args.out)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        algorithm: args.algo,
        residual_window: config.window(loaded.problem.num_scenarios()),
        config: config.clone(),
        problem: args.run.problem_info(&loaded),
        reference: reference.clone(),
        sim_schedule: args.run.sim_schedule.clone(),
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    info!("running {} on {} scenarios", args.algo, loaded.problem.num_scenarios());
    let record = solve(args.algo, &loaded.problem, &config, reference.value)?;
    metrics::write_file(&args.out.join("metrics.csv"), &record.rows)?;
    let solution = Solution::new(&loaded.problem, &record, reference.value)?;
    write_json(&args.out.join("solution.json"), &solution)?;
    println!(
        "{}",
        serde_json::json!({
            "algorithm": args.algo,
            "termination": record.termination.label(),
            "objective": record.objective,
            "n_subproblems": record.n_subproblems,
            "subopt_rel": solution.subopt_rel,
        })
    );
    match failure_of(&record) {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

#[derive(Debug, Serialize)]
struct BenchManifest {
    version: String,
    algorithms: Vec<Algorithm>,
    reps: usize,
    seed_base: u64,
    bins: usize,
    jobs: usize,
    /// Configuration of repetition 0; later repetitions differ only by seed.
    config: AlgorithmConfig,
    residual_window: usize,
    problem: ProblemInfo,
    reference: Reference,
    sim_schedule: String,
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.reps == 0 || args.bins == 0 || args.jobs == 0 {
        return Err(CliError::parse("--reps, --bins and --jobs must be positive"));
    }
    if args.algos.is_empty() {
        return Err(CliError::parse("no algorithm given"));
    }
    let loaded = load_problem(&args.run.problem)?;
    let base = args.run.config(&loaded.problem, args.seed_base)?;
    // Concurrent repetitions would compete with their own parallel workers
    // for cores and distort measured time.
    if args.jobs > 1 && base.schedule.is_none() && base.workers > 1 {
        return Err(CliError::parse("--jobs > 1 needs --sim-schedule or --workers 1"));
    }
    let reference = args.run.reference(&loaded)?;
    create_dir(&args.out)?;
    let runs_dir = args.out.join("runs");
    create_dir(&runs_dir)?;
    write_json(
        &args.out.join("manifest.json"),
        &BenchManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            algorithms: args.algos.clone(),
            reps: args.reps,
            seed_base: args.seed_base,
            bins: args.bins,
            jobs: args.jobs,
            residual_window: base.window(loaded.problem.num_scenarios()),
            config: base.clone(),
            problem: args.run.problem_info(&loaded),
            reference: reference.clone(),
            sim_schedule: args.run.sim_schedule.clone(),
        },
    )?;

    let tasks: Vec<(Algorithm, usize)> =
        args.algos.iter().flat_map(|&a| (0..args.reps).map(move |r| (a, r))).collect();
    let results: Mutex<Vec<Option<Result<RunRecord>>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(algo, r)) = tasks.get(i) else { break };
        let config = AlgorithmConfig { seed: args.seed_base + r as u64, ..base.clone() };
        info!("{algo} repetition {r}");
        let outcome = solve(algo, &loaded.problem, &config, reference.value).map_err(CliError::from);
        results.lock().expect("result lock")[i] = Some(outcome);
    };
    std::thread::scope(|scope| {
        for _ in 1..args.jobs.min(tasks.len()) {
            scope.spawn(work);
        }
        work();
    });
    let results: Vec<Result<RunRecord>> =
        results.into_inner().expect("result lock").into_iter().map(|r| r.expect("every task ran")).collect();

    let mut summaries = Vec::new();
    for (&(algo, r), outcome) in tasks.iter().zip(&results) {
        let seed = args.seed_base + r as u64;
        let summary = match outcome {
            Ok(record) => {
                metrics::write_file(&runs_dir.join(format!("{algo}-{r}.csv")), &record.rows)?;
                let failure = failure_of(record);
                RunSummary {
                    algorithm: algo,
                    repetition: r,
                    seed,
                    status: failure.as_ref().map_or("ok".to_string(), |e| e.category.to_string()),
                    termination: record.termination.label().to_string(),
                    n_subproblems: Some(record.n_subproblems),
                    elapsed_seconds: Some(record.elapsed_seconds),
                    subopt_rel: record.final_row().and_then(|row| row.subopt_rel),
                    message: failure.map(|e| e.message).unwrap_or_default(),
                }
            }
            Err(e) => {
                warn!("{algo} repetition {r} failed: {e}");
                RunSummary {
                    algorithm: algo,
                    repetition: r,
                    seed,
                    status: e.category.to_string(),
                    termination: String::new(),
                    n_subproblems: None,
                    elapsed_seconds: None,
                    subopt_rel: None,
                    message: e.message.clone(),
                }
            }
        };
        summaries.push(summary);
    }
    write_runs(&args.out.join("runs.csv"), &summaries)?;

    // Aggregate successes only; failures stay visible in runs.csv.
    let ok: Vec<(Algorithm, &[rphedge::hedging::MetricsRow])> = tasks
        .iter()
        .zip(&results)
        .zip(&summaries)
        .filter(|(_, s)| s.status == "ok")
        .map(|((&(a, _), rec), _)| (a, rec.as_ref().expect("ok run").rows.as_slice()))
        .collect();
    if ok.is_empty() {
        return Err(CliError::runtime("every repetition failed; see runs.csv"));
    }
    let all: Vec<&[rphedge::hedging::MetricsRow]> = ok.iter().map(|(_, rows)| *rows).collect();
    let mut rows: Vec<AggregateRow> = Vec::new();
    if let Some(edges) = bench::bins_for(&all, args.bins) {
        for &algo in &args.algos {
            let runs: Vec<_> = ok.iter().filter(|(a, _)| *a == algo).map(|(_, rows)| *rows).collect();
            rows.extend(bench::aggregate(algo, &runs, &edges));
        }
    }
    let file = std::fs::File::create(args.out.join("aggregate.csv"))
        .map_err(|e| CliError::runtime(format!("cannot create aggregate.csv: {e}")))?;
    bench::write_csv(file, &rows)?;
    let failed = summaries.len() - ok.len();
    if failed > 0 {
        warn!("{failed} of {} runs failed; aggregates cover the rest", summaries.len());
    }
    println!("{}", serde_json::json!({ "runs": summaries.len(), "failed": failed, "aggregate_rows": rows.len() }));
    Ok(())
}

fn write_runs(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))?;
    bench::write_csv(file, rows)
}

fn cmd_generate(args: &HydroArgs) -> Result<()> {
    let mut spec = HydroSpec::new(args.dams, args.stages, args.seed);
    if let Some(v) = args.lambda {
        spec.lambda = v;
    }
    if let Some(v) = args.p_dry {
        spec.p_dry = v;
    }
    if let Some(v) = args.demand_per_dam {
        spec.demand_per_dam = v;
    }
    let file = match args.form {
        HydroForm::Spec => ProblemFile::hydro(spec),
        HydroForm::Params => {
            ProblemFile { hydro: None, hydro_params: Some(spec.generate()?), ..ProblemFile::hydro(spec) }
        }
        HydroForm::Explicit => ProblemFile::from_problem(&spec.generate()?.build()?),
    };
    // Check the file loads before writing it.
    file.to_problem()?;
    file.write(&args.out)
}
