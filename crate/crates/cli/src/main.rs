mod commands;
mod config;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, Failure};
use config::RunConfig;
use results::{ResultRow, Status};

#[derive(Parser)]
#[command(name = "csferm", version, about = "Cutoff Chern-Simons terms and their fermionized counterparts on a lattice torus")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for results and caches.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; overrides the configuration.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mollifier property suite over the h list.
    VerifyMollifiers,
    /// Write propagator and mollifier caches.
    BuildKernels,
    /// Evaluate Ξₙ and Θₙ for every (ε, h, n).
    EvalTerm,
    /// h sweep of |Θₙ − m-normalized Ξₙ| with the convergence checks.
    RunEquivalence,
    /// Factorial bound certificates and Berezin spot checks.
    RunBounds,
    /// Tidy (x, y, series) table from a results file.
    EmitPlotData {
        #[arg(long)]
        metric: String,
        /// Results file; defaults to results.csv under --out.
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Command::EmitPlotData { metric, results } = &cli.command {
        let path = results.clone().unwrap_or_else(|| cli.out.join("results.csv"));
        let mut stdout = std::io::stdout().lock();
        commands::emit_plot_data(&path, metric, &mut stdout)?;
        return Ok(true);
    }
    if cli.workers == Some(0) {
        return Err(Failure::Usage("--workers: must be at least 1".into()));
    }
    let path = cli.config.as_ref().ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let (name, f): (&'static str, fn(&Context) -> Result<Vec<ResultRow>, Failure>) = match cli.command {
        Command::VerifyMollifiers => ("verify-mollifiers", commands::verify_mollifiers),
        Command::BuildKernels => ("build-kernels", commands::build_kernels),
        Command::EvalTerm => ("eval-term", commands::eval_term),
        Command::RunEquivalence => ("run-equivalence", commands::run_equivalence),
        Command::RunBounds => ("run-bounds", commands::run_bounds),
        Command::EmitPlotData { .. } => unreachable!(),
    };
    let ctx = Context::new(cfg, cli.out.clone(), cli.workers, cli.verbose, name);
    let rows = f(&ctx)?;
    results::append(&ctx.results_path(), &rows)?;
    let failed: Vec<&ResultRow> = rows.iter().filter(|r| r.status == Status::Fail).collect();
    for r in &failed {
        eprintln!("FAIL {} = {} (h = {:?}, n = {:?}, epsilon = {:?})", r.metric, r.value, r.h, r.n, r.epsilon);
    }
    if ctx.verbose {
        eprintln!("{} rows written to {}", rows.len(), ctx.results_path().display());
    }
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
