//! The `tpi` command line.
//!
//! Exit codes: 0 success, 1 failed check or internal failure, 2 invalid
//! configuration or arguments, 3 I/O failure.

use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand};

use crate::experiments::{self, ExperimentConfig, ExperimentKind, GridCell};
use crate::io::{self, RunManifest, ARTIFACT_VERSION};
use crate::model::{sample_components, sample_sphere_init};
use crate::power_iter::{self, RunOptions};
use crate::tensor;
use crate::Error;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "TPI_THREADS";

/// Tolerance of `oracle-check`.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "tpi",
    version,
    about = "Tensor power iteration on random overcomplete tensors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a single trajectory and emit it as JSON.
    Run(RunArgs),
    /// Success-rate sweep over (k, d) cells.
    SweepPhase(SweepArgs),
    /// Success-rate sweep over (d, T) cells with k = ⌈d^ratio⌉.
    SweepDt(SweepArgs),
    /// Objective S(x̃_t) along the path against 3k + 20td.
    Trajectory(SweepArgs),
    /// Per-(trial, t) conditioning diagnostics.
    Diagnose(SweepArgs),
    /// Compare implicit and explicit contractions on small instances.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long = "order-m", default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = power_iter::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_steps: usize,
    /// Keep y_t and f_t in the output.
    #[arg(long)]
    pub record_full: bool,
    /// Directory for trajectory.json (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid cell `K:D:T`; repeatable.
    #[arg(long = "cell", value_parser = parse_cell)]
    pub cells: Vec<GridCell>,
    /// Dimensions for a d × T grid on the curve k = ⌈d^ratio⌉.
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    /// Step budgets for the d × T grid.
    #[arg(long, value_delimiter = ',')]
    pub steps: Vec<usize>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long = "order-m")]
    pub m: Option<usize>,
    /// Overrides T of every grid cell.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Random (A, x) pairs per (d, k, m).
    #[arg(long, default_value_t = 20)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_cell(s: &str) -> Result<GridCell, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [k, d, t] = parts.as_slice() else {
        return Err(format!("expected K:D:T, got `{s}`"));
    };
    let num = |v: &str| v.parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok(GridCell::new(num(k)?, num(d)?, num(t)?))
}

/// Maps a library error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 3,
        Error::InvalidConfig { .. }
        | Error::InvalidArgument { .. }
        | Error::InvalidDimension { .. }
        | Error::DimensionMismatch { .. }
        | Error::TensorTooLarge { .. }
        | Error::Parse { .. } => 2,
        Error::NumericalFailure { .. }
        | Error::DegenerateSample { .. }
        | Error::MissingFullRecord => 1,
    }
}

impl SweepArgs {
    fn build_config(&self, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
        let mut config = match &self.config {
            Some(path) => {
                let c = io::load_config(path)?;
                if c.kind != kind {
                    return Err(Error::config(
                        "kind",
                        format!("config is {:?}, subcommand runs {kind:?}", c.kind),
                    ));
                }
                c
            }
            None => ExperimentConfig::new(kind, Vec::new(), 100, 0),
        };
        if let Some(ratio) = self.ratio {
            config.ratio = ratio;
        }
        if !self.cells.is_empty() || !self.dims.is_empty() {
            let mut grid = self.cells.clone();
            if self.dims.is_empty() != self.steps.is_empty() {
                return Err(Error::config("steps", "--dims and --steps go together"));
            }
            for &d in &self.dims {
                for &t in &self.steps {
                    grid.push(GridCell::on_curve(d, config.ratio, t));
                }
            }
            config.grid = grid;
        }
        if let Some(seed) = self.seed {
            config.base_seed = seed;
        }
        if let Some(trials) = self.trials {
            config.trials = trials;
        }
        if let Some(tau) = self.tau {
            config.tau = tau;
        }
        if let Some(m) = self.m {
            config.m = m;
        }
        if let Some(t) = self.max_steps {
            config.grid.iter_mut().for_each(|c| c.steps = t);
        }
        config.validate()?;
        Ok(config)
    }

    fn out_dir(&self) -> Result<&Path, Error> {
        let dir = self.out.as_deref().ok_or_else(|| {
            Error::config("--out", "this subcommand writes files; pass --out DIR")
        })?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(dir)
    }
}

fn run_single(args: &RunArgs) -> Result<(), Error> {
    let options = RunOptions {
        max_steps: args.max_steps,
        tau: args.tau,
        record_full: args.record_full,
        stop_on_recovery: true,
    };
    options.validate()?;
    let a = sample_components(args.k, args.d, args.m, args.seed)?;
    let x0 = sample_sphere_init(args.d, args.seed)?;
    let traj = power_iter::run(&a, &x0, &options)?;
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("trajectory.json");
            io::write_trajectory_json(&traj, args.k, args.m, args.seed, &path)?;
            println!("{}", path.display());
        }
        None => print!("{}", io::trajectory_json(&traj, args.k, args.m, args.seed)),
    }
    Ok(())
}

fn run_sweep(kind: ExperimentKind, args: &SweepArgs) -> Result<(), Error> {
    let config = args.build_config(kind)?;
    let dir = args.out_dir()?;
    let started = Utc::now();
    let mut outputs = Vec::new();
    match kind {
        ExperimentKind::PhaseKd | ExperimentKind::PhaseDt => {
            let (result, name) = if kind == ExperimentKind::PhaseKd {
                (experiments::run_phase_sweep(&config)?, "sweep_phase.csv")
            } else {
                (experiments::run_dt_sweep(&config)?, "sweep_dt.csv")
            };
            let path = dir.join(name);
            io::write_sweep_csv(&result, &path)?;
            outputs.push(path);
        }
        ExperimentKind::ObjectiveTraj => {
            for cell in experiments::run_objective_traj(&config)?.cells {
                let path = dir.join(format!(
                    "objective_k{}_d{}_T{}.csv",
                    cell.k, cell.d, cell.steps
                ));
                io::write_objective_csv(&cell.rows, &path)?;
                outputs.push(path);
            }
        }
        ExperimentKind::Diagnostics => {
            for cell in experiments::run_diagnostics(&config)?.cells {
                let path = dir.join(format!(
                    "diagnostics_k{}_d{}_T{}.csv",
                    cell.k, cell.d, cell.steps
                ));
                io::write_diagnostics_csv(&cell, &path)?;
                outputs.push(path);
            }
        }
    }
    let manifest = RunManifest {
        config_echo: config,
        artifact_version: ARTIFACT_VERSION.to_string(),
        started,
        finished: Utc::now(),
        output_paths: outputs.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    io::write_manifest(&manifest, &manifest_path)?;
    for p in outputs.iter().chain(std::iter::once(&manifest_path)) {
        println!("{}", p.display());
    }
    Ok(())
}

fn oracle_check(args: &OracleArgs) -> Result<bool, Error> {
    let report = tensor::oracle_check(
        &[2, 3, 4],
        &(1..=8).collect::<Vec<_>>(),
        &[2, 3],
        args.pairs,
        args.seed,
    )?;
    let pass = report.max_relative_error <= ORACLE_TOLERANCE;
    println!(
        "oracle-check: {} cases, max relative error {:e} at (d, k, m) = {:?}, tolerance {:e}: {}",
        report.cases,
        report.max_relative_error,
        report.worst,
        ORACLE_TOLERANCE,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::config(
            THREADS_ENV,
            format!("expected a positive integer, got `{raw}`"),
        )
    })?;
    // a second call in the same process (tests) finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Run(a) => run_single(a).map(|()| true),
        Command::SweepPhase(a) => run_sweep(ExperimentKind::PhaseKd, a).map(|()| true),
        Command::SweepDt(a) => run_sweep(ExperimentKind::PhaseDt, a).map(|()| true),
        Command::Trajectory(a) => run_sweep(ExperimentKind::ObjectiveTraj, a).map(|()| true),
        Command::Diagnose(a) => run_sweep(ExperimentKind::Diagnostics, a).map(|()| true),
        Command::OracleCheck(a) => oracle_check(a),
    });
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `argv` (clap exits with code 2 on usage errors) and runs it.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
