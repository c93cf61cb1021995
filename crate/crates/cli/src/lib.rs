//! Experiment runner for the `seboost` library.
//!
//! `seboost run --config exp.json` trains every cell of an experiment, writes
//! one trace CSV per (cell, seed) and overlays the runs in two SVG plots,
//! against epochs and against wall time.

pub mod config;
pub mod experiment;
pub mod svg;
pub mod trace;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use config::{parse_config, ExperimentConfig};
use experiment::{build_cells, load_problem, run_cell, CellRun};
use seboost::DataError;

#[derive(Debug, Parser)]
#[command(name = "seboost", version, about = "Train baseline and boosted optimizers and plot their loss curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment described by a JSON config.
    Run(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated seeds; overrides `seeds` from the config.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Run only the plain baseline cells.
    #[arg(long)]
    pub no_boost: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Io(_) => 3,
        })
    }
}

pub const THREADS_ENV: &str = "SEBOOST_THREADS";

#[derive(Debug)]
pub struct Summary {
    pub runs: Vec<CellRun>,
    pub files: Vec<PathBuf>,
}

/// Load the config named by `args` and apply the command-line overrides.
pub fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(out) = &args.output {
        cfg.output_dir = out.clone();
    }
    if let Some(seeds) = &args.seeds {
        if seeds.is_empty() {
            return Err(Failure::Config("--seeds needs at least one seed".into()));
        }
        cfg.seeds = seeds.clone();
    }
    if args.no_boost {
        cfg.boost.boosting_enabled = false;
    }
    Ok(cfg)
}

fn thread_count() -> Result<usize, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Failure::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, usize::from)),
    }
}

fn io_failure(path: &std::path::Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Everything `run` does after the config is resolved. Nothing is written
/// until the config, cells and data have all been validated.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary, Failure> {
    let cells = build_cells(cfg);
    if cells.is_empty() {
        return Err(Failure::Config(format!("experiment {} has no cells to run", cfg.experiment)));
    }
    let threads = thread_count()?;
    let problem = load_problem(cfg).map_err(|e| match e {
        DataError::Io { .. } => Failure::Io(e.to_string()),
        _ => Failure::Config(format!("data: {e}")),
    })?;
    for cell in &cells {
        cell.boost
            .validate(problem.train.len())
            .map_err(|e| Failure::Config(format!("{}: {e}", cell.name)))?;
        cell.baseline
            .validate()
            .map_err(|e| Failure::Config(format!("{}: {e}", cell.name)))?;
    }

    let out_dir = &cfg.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
    let jobs: Vec<_> = cells.iter().flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    log::info!("{}: {} runs on {threads} thread(s)", cfg.experiment, jobs.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let results: Vec<Result<(CellRun, PathBuf), Failure>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, seed)| {
                let run = run_cell(&problem, cell, seed, cfg.epochs)
                    .map_err(|e| Failure::Runtime(format!("{} seed {seed}: {e}", cell.name)))?;
                let path = out_dir.join(format!("{}.csv", run.file_stem()));
                let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
                trace::write_trace(BufWriter::new(file), &run.records).map_err(|e| io_failure(&path, e))?;
                Ok((run, path))
            })
            .collect()
    });
    let mut runs = Vec::new();
    let mut files = Vec::new();
    for r in results {
        let (run, path) = r?;
        runs.push(run);
        files.push(path);
    }
    files.extend(write_plots(cfg, &runs)?);
    Ok(Summary { runs, files })
}

fn write_plots(cfg: &ExperimentConfig, runs: &[CellRun]) -> Result<Vec<PathBuf>, Failure> {
    let series = |x: &dyn Fn(&CellRun, &seboost::TraceRecord) -> f64| -> Vec<svg::Series> {
        runs.iter()
            .map(|run| svg::Series {
                label: format!("{} seed {}", run.cell, run.seed),
                group: run.cell.clone(),
                points: run.records.iter().map(|r| (x(run, r), r.train_loss)).collect(),
            })
            .collect()
    };
    let epochs = series(&|run, r| (r.baseline_steps * run.batch_size) as f64 / run.train_len as f64);
    let wall = series(&|_, r| r.wall_ms / 1000.0);
    let title = format!("{}: training loss", cfg.experiment);
    let mut paths = Vec::new();
    for (name, x_label, series) in [
        ("curves_epochs.svg", "epochs", &epochs),
        ("curves_walltime.svg", "wall time (s)", &wall),
    ] {
        let body = svg::Plot {
            title: &title,
            x_label,
            y_label: "train loss",
            series,
        }
        .render();
        let path = cfg.output_dir.join(name);
        std::fs::write(&path, body).map_err(|e| io_failure(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Entry point shared by the binary and the tests.
pub fn main_with(cli: Cli) -> ExitCode {
    let Command::Run(args) = cli.command;
    let level = if args.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let result = resolve_config(&args).and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok(summary) => {
            if !args.quiet {
                println!("cell,seed,final_train_loss,final_test_loss");
                for run in &summary.runs {
                    if let Some(last) = run.records.last() {
                        println!("{},{},{},{}", run.cell, run.seed, last.train_loss, last.test_loss);
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
