//! Command-line front end: `run`, `gen`, `swf2json`, `sweep`, `serve-env`.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 simulation fault,
//! 4 I/O failure.

use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::engine::{run_simulation, ResultsBundle, SimError};
use crate::platform::{parse_platform, Platform};
use crate::report::{self, GanttOptions};
use crate::rlenv::{self, PowerEnv, ServeError, Transport};
use crate::sched::{AlgorithmName, Scheduler};
use crate::workload::{convert_swf, generate_workload, parse_workload, GenSpec, Workload};

/// Environment variable that overrides `logging.level`.
pub const LOG_ENV: &str = "POWERSCHED_LOG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Read { .. }) => 4,
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Sim(SimError::JobTooLarge { .. }) => 2,
            CliError::Sim(_) => 3,
            CliError::Serve(ServeError::Io(_)) => 4,
            CliError::Serve(ServeError::Env(rlenv::EnvError::Sim(SimError::JobTooLarge { .. }))) => 2,
            CliError::Serve(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Parser, Debug)]
#[command(name = "powersched", version, about = "Power-aware HPC batch scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one simulation (or serve the RL environment when rl.enabled).
    Run(RunArgs),
    /// Generate a synthetic workload.
    Gen(GenArgs),
    /// Convert a Standard Workload Format trace to workload JSON.
    Swf2json(SwfArgs),
    /// Run every algorithm × timeout combination and compare.
    Sweep(SweepArgs),
    /// Serve the power-management environment to an agent.
    ServeEnv(ServeArgs),
    /// Constant-action agent speaking the environment protocol on stdio.
    #[command(hide = true)]
    StubAgent(StubArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub algorithm: Option<String>,
    /// Decision cadence in seconds, or `null`.
    #[arg(long)]
    pub timeout: Option<String>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub num_jobs: usize,
    /// Jobs per second.
    #[arg(long)]
    pub arrival_rate: f64,
    /// Seconds.
    #[arg(long)]
    pub mean_runtime: f64,
    #[arg(long, default_value_t = 1.0)]
    pub runtime_cv: f64,
    #[arg(long, default_value_t = 1)]
    pub min_res: u32,
    #[arg(long)]
    pub max_res: u32,
    #[arg(long, default_value_t = 1.5)]
    pub reqtime_factor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SwfArgs {
    pub input: PathBuf,
    /// Platform size; larger jobs are dropped.
    #[arg(long)]
    pub nb_res: u32,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// `start..end:step` (inclusive) or a comma-separated list, seconds.
    #[arg(long)]
    pub timeouts: String,
    /// Repeatable; defaults to the config's algorithm.
    #[arg(long)]
    pub algorithm: Vec<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `stdio`, `tcp:<addr>` or `spawn:<command line>`.
    #[arg(long)]
    pub transport: Option<String>,
    #[arg(long)]
    pub episodes: Option<u64>,
}

#[derive(Args, Debug)]
pub struct StubArgs {
    /// JSON action value sent for every observation.
    #[arg(long, default_value = "0")]
    pub action: String,
}

pub fn parse_transport(s: &str) -> Result<Transport, String> {
    if s == "stdio" {
        Ok(Transport::Stdio)
    } else if let Some(addr) = s.strip_prefix("tcp:") {
        Ok(Transport::Tcp(addr.to_string()))
    } else if let Some(cmd) = s.strip_prefix("spawn:") {
        let parts: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
        if parts.is_empty() {
            return Err("spawn: needs a command".into());
        }
        Ok(Transport::Spawn(parts))
    } else {
        Err(format!("unknown transport {s:?} (expected stdio, tcp:<addr> or spawn:<cmd>)"))
    }
}

/// `300..3600:300` (inclusive) or `300,600,900`.
pub fn parse_timeouts(s: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("cannot parse timeouts {s:?}");
    if let Some((range, step)) = s.split_once(':') {
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let (a, b, step): (u64, u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if step == 0 || a > b {
            return Err(bad());
        }
        Ok((a..=b).step_by(step as usize).map(|t| t as f64).collect())
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0).ok_or_else(bad))
            .collect()
    }
}

fn read_config(args: &RunArgs) -> Result<Config, CliError> {
    let path = &args.config;
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut cfg = Config::parse(&text, json).map_err(|msg| ConfigError::Parse { path: path.clone(), msg })?;
    if let Some(o) = &args.output {
        cfg.paths.output = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(a) = &args.algorithm {
        cfg.run.algorithm = a.clone();
    }
    if let Some(t) = &args.timeout {
        cfg.run.timeout = match t.as_str() {
            "null" | "none" => None,
            v => Some(v.parse().map_err(|_| CliError::Input(format!("--timeout: cannot parse {v:?}")))?),
        };
    }
    Ok(cfg.resolve()?)
}

pub fn init_logging(cfg: &Config) {
    let level = std::env::var(LOG_ENV).unwrap_or_else(|_| cfg.logging.level.to_lowercase());
    let mut b = env_logger::Builder::new();
    b.parse_filters(&level);
    if let Some(file) = &cfg.logging.file {
        if let Some(dir) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
            let _ = std::fs::create_dir_all(dir);
        }
        match File::create(file) {
            Ok(f) => {
                b.target(env_logger::Target::Pipe(Box::new(f)));
            }
            Err(e) => eprintln!("warning: cannot open log file {}: {e}", file.display()),
        }
    }
    let _ = b.try_init();
}

fn init_default_logging() {
    let level = std::env::var(LOG_ENV).unwrap_or_else(|_| "info".into());
    let _ = env_logger::Builder::new().parse_filters(&level).try_init();
}

pub fn load_inputs(cfg: &Config) -> Result<(Platform, Workload), CliError> {
    let pbytes = std::fs::read(&cfg.paths.platform).map_err(io_err(format!("reading {}", cfg.paths.platform.display())))?;
    let platform =
        parse_platform(&pbytes).map_err(|e| CliError::Input(format!("{}: {e}", cfg.paths.platform.display())))?;
    let wbytes = std::fs::read(&cfg.paths.workload).map_err(io_err(format!("reading {}", cfg.paths.workload.display())))?;
    let workload =
        parse_workload(&wbytes).map_err(|e| CliError::Input(format!("{}: {e}", cfg.paths.workload.display())))?;
    Ok((platform, workload))
}

fn metadata(cfg: &Config, extra: Option<Value>) -> Value {
    let mut m = json!({
        "algorithm": cfg.run.algorithm,
        "seed": cfg.seed,
        "start_time_us": cfg.start_time().0,
        "config": serde_json::to_value(cfg).expect("config serializes"),
    });
    if let Some(x) = extra {
        m["rl"] = x;
    }
    m
}

/// Runs the configured simulation without an agent.
pub fn simulate(cfg: &Config, platform: Platform, workload: &Workload) -> Result<ResultsBundle, SimError> {
    let mut policy = Scheduler::new(cfg.policy_config());
    let engine = cfg.engine_config();
    log::info!(
        "running {} on {} nodes, {} jobs, timeout {:?}",
        cfg.run.algorithm,
        platform.num_nodes(),
        workload.len(),
        engine.timeout
    );
    run_simulation(engine, platform, workload, &mut policy)
}

/// Writes the four result files plus the config echo.
pub fn write_outputs(cfg: &Config, results: &ResultsBundle, meta: &Value) -> Result<(), CliError> {
    let dir = &cfg.paths.output;
    report::write_bundle(dir, results, meta, &GanttOptions::default())
        .map_err(io_err(format!("writing results to {}", dir.display())))?;
    report::write_atomic(&dir.join("config.json"), cfg.to_json().as_bytes())
        .map_err(io_err(format!("writing config echo to {}", dir.display())))?;
    Ok(())
}

fn serve_env(cfg: &Config, transport: &Transport, episodes: u64) -> Result<(), CliError> {
    let (platform, workload) = load_inputs(cfg)?;
    let mut env = PowerEnv::new(
        cfg.env_config(),
        cfg.engine_config(),
        cfg.policy_config(),
        platform,
        workload,
        cfg.seed,
    )
    .map_err(ServeError::from)?;
    let report = rlenv::serve_transport(&mut env, transport, episodes)?;
    if report.rejected > 0 {
        log::warn!("{} agent message(s) rejected", report.rejected);
    }
    let last = report.episodes.last().ok_or_else(|| CliError::Input("no episode was run".into()))?;
    write_outputs(cfg, last, &metadata(cfg, Some(env.metadata())))
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = read_config(args)?;
    init_logging(&cfg);
    if cfg.rl.enabled {
        return serve_env(&cfg, &cfg.rl.transport, cfg.rl.epochs);
    }
    let (platform, workload) = load_inputs(&cfg)?;
    let results = simulate(&cfg, platform, &workload)?;
    write_outputs(&cfg, &results, &metadata(&cfg, None))?;
    log::info!("results written to {}", cfg.paths.output.display());
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let mut cfg = read_config(&args.run)?;
    cfg.rl.enabled = true;
    if let Some(t) = &args.transport {
        cfg.rl.transport = parse_transport(t).map_err(CliError::Input)?;
    }
    if let Some(e) = args.episodes {
        cfg.rl.epochs = e.max(1);
    }
    init_logging(&cfg);
    serve_env(&cfg, &cfg.rl.transport, cfg.rl.epochs)
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    init_default_logging();
    let spec = GenSpec {
        num_jobs: args.num_jobs,
        arrival_rate: args.arrival_rate,
        mean_runtime: args.mean_runtime,
        runtime_cv: args.runtime_cv,
        min_res: args.min_res,
        max_res: args.max_res,
        reqtime_factor: args.reqtime_factor,
        seed: args.seed,
    };
    let w = generate_workload(&spec).map_err(|e| CliError::Input(e.to_string()))?;
    report::write_atomic(&args.output, w.to_json().as_bytes()).map_err(io_err(format!("writing {}", args.output.display())))
}

fn cmd_swf(args: &SwfArgs) -> Result<(), CliError> {
    init_default_logging();
    let text = std::fs::read_to_string(&args.input).map_err(io_err(format!("reading {}", args.input.display())))?;
    let conv = convert_swf(&text, args.nb_res);
    log::info!(
        "{} jobs converted, {} dropped, {} unreadable line(s)",
        conv.workload.len(),
        conv.dropped,
        conv.skipped_lines
    );
    report::write_atomic(&args.output, conv.workload.to_json().as_bytes())
        .map_err(io_err(format!("writing {}", args.output.display())))
}

pub const SWEEP_CSV: &str = "sweep.csv";

/// One sweep run's configuration: algorithm and timeout applied to both
/// the decision cadence and the idle shutdown threshold.
pub fn sweep_config(base: &Config, algorithm: &str, timeout: f64) -> Result<Config, CliError> {
    let mut cfg = base.clone();
    cfg.run.algorithm = algorithm.to_string();
    cfg.run.timeout = Some(timeout);
    cfg.psm.idle_timeout = Some(timeout);
    cfg.paths.output = sweep_run_dir(&base.paths.output, algorithm, timeout);
    Ok(cfg.resolve()?)
}

/// Runs the cartesian product and returns the comparison CSV.
pub fn run_sweep(
    base: &Config,
    algorithms: &[String],
    timeouts: &[f64],
    platform: &Platform,
    workload: &Workload,
    write: bool,
) -> Result<String, CliError> {
    let mut configs = Vec::new();
    for a in algorithms {
        let name: AlgorithmName = a.parse().map_err(|e: crate::sched::UnknownAlgorithm| CliError::Input(e.to_string()))?;
        for &t in timeouts {
            configs.push(sweep_config(base, &name.to_string(), t)?);
        }
    }
    let rows: Vec<Result<String, CliError>> = configs
        .par_iter()
        .map(|cfg| {
            let results = simulate(cfg, platform.clone(), workload)?;
            if write {
                write_outputs(cfg, &results, &metadata(cfg, None))?;
            }
            let s = &results.summary;
            Ok(format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                cfg.run.algorithm,
                cfg.run.timeout.expect("set by sweep"),
                s.total_energy.0,
                s.wasted_energy.0,
                s.total_energy.as_joules_f64(),
                s.wasted_energy.as_joules_f64(),
                s.mean_waiting / 1e6,
                s.max_waiting.display_secs(),
                s.utilization,
                s.makespan.display_secs(),
                s.job_count,
                s.terminated_count
            ))
        })
        .collect();
    let mut csv = String::from(
        "algorithm,timeout_s,total_energy_nj,wasted_energy_nj,total_energy_j,wasted_energy_j,mean_waiting_s,max_waiting_s,utilization,makespan_s,job_count,terminated_count\n",
    );
    for r in rows {
        csv.push_str(&r?);
        csv.push('\n');
    }
    Ok(csv)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let run_args = RunArgs {
        config: args.config.clone(),
        output: args.output.clone(),
        seed: args.seed,
        algorithm: None,
        timeout: None,
    };
    let cfg = read_config(&run_args)?;
    init_logging(&cfg);
    let timeouts = parse_timeouts(&args.timeouts).map_err(CliError::Input)?;
    let algorithms = if args.algorithm.is_empty() { vec![cfg.run.algorithm.clone()] } else { args.algorithm.clone() };
    let (platform, workload) = load_inputs(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let csv = pool.install(|| run_sweep(&cfg, &algorithms, &timeouts, &platform, &workload, true))?;
    std::fs::create_dir_all(&cfg.paths.output).map_err(io_err("creating sweep output"))?;
    let path = cfg.paths.output.join(SWEEP_CSV);
    report::write_atomic(&path, csv.as_bytes()).map_err(io_err(format!("writing {}", path.display())))?;
    log::info!("{} runs, comparison in {}", algorithms.len() * timeouts.len(), path.display());
    Ok(())
}

fn cmd_stub(args: &StubArgs) -> Result<(), CliError> {
    let action: Value =
        serde_json::from_str(&args.action).map_err(|e| CliError::Input(format!("--action: {e}")))?;
    let report = rlenv::stub::run(BufReader::new(io::stdin().lock()), io::stdout().lock(), &action)
        .map_err(io_err("stub agent"))?;
    eprintln!(
        "stub agent: {} observation(s), {} action(s), {} episode summary(ies), {} error(s)",
        report.observations.len(),
        report.actions_sent,
        report.summaries.len(),
        report.errors.len()
    );
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Swf2json(a) => cmd_swf(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ServeEnv(a) => cmd_serve(a),
        Command::StubAgent(a) => cmd_stub(a),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

/// Output directory of a sweep run.
pub fn sweep_run_dir(base: &Path, algorithm: &str, timeout: f64) -> PathBuf {
    base.join(format!("{algorithm}_t{timeout}"))
}
