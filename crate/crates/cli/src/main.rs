//! churn-lab command line: run experiments, sweep grids, verify the
//! convergence bounds, and re-render reports.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use churn_lab::harness::{self, ConfigFile};

#[derive(Parser)]
#[command(name = "churn-lab", version, about = "Training-stability laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the experiment base seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = one per CPU). Results are identical at any
    /// worker count.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// What to echo to stdout once results are written.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Csv,
    Table,
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method n_runs times and report accuracy and churn.
    Run(CommonArgs),
    /// Run every grid point of the configured method.
    Sweep(CommonArgs),
    /// Rate experiments and bound evaluation for the k-NN label theory.
    Theory(CommonArgs),
    /// Re-render summaries from a persisted runs.jsonl.
    Report {
        /// Path to runs.jsonl.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

fn load_config(args: &CommonArgs) -> Result<ConfigFile> {
    let mut cfg = ConfigFile::from_path(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.experiment.base_seed = seed;
        if let Some(theory) = cfg.theory.as_mut() {
            theory.seed = seed;
        }
    }
    Ok(cfg)
}

fn init_workers(workers: usize) {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    // The pool may already exist when tests drive main() twice; that's fine.
    let _ = builder.build_global();
}

fn echo(rendered: &harness::RenderedReport, format: Format, out: &std::path::Path) {
    match format {
        Format::Csv => print!("{}", rendered.csv),
        Format::Table => print!("{}", rendered.table),
        Format::Jsonl => println!("runs written to {}", out.join("runs.jsonl").display()),
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            init_workers(args.workers);
            let cfg = load_config(&args)?;
            let rendered = harness::execute_run(&cfg, &args.out)?;
            echo(&rendered, args.format, &args.out);
        }
        Command::Sweep(args) => {
            init_workers(args.workers);
            let cfg = load_config(&args)?;
            let rendered = harness::execute_sweep(&cfg, &args.out)?;
            echo(&rendered, args.format, &args.out);
        }
        Command::Theory(args) => {
            init_workers(args.workers);
            let cfg = load_config(&args)?;
            let csv = harness::execute_theory(&cfg, &args.out)?;
            print!("{csv}");
        }
        Command::Report { runs, out, format } => {
            let rendered = harness::execute_report(&runs, &out)?;
            echo(&rendered, format, &out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
