//! Experiment runner for the separated-cubature volume-potential library:
//! reproduces the reference tables, runs convergence studies and quadrature
//! tuning, and emits machine-readable CSV or key-value reports.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::Config;
use report::Format;

#[derive(Parser)]
#[command(name = "volpot", version, about = "High-dimensional volume potential experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Values given here override the
/// config file.
#[derive(Args, Default)]
struct Common {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, default_value = "csv")]
    format: String,
    /// Rayon thread count (defaults to the machine).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Probe-set jitter seed for the tuner.
    #[arg(long, global = true)]
    seed: Option<String>,

    /// Space dimension (or comma list where a list is meaningful).
    #[arg(long = "n")]
    n: Option<String>,
    /// Grid step.
    #[arg(long = "h")]
    h: Option<String>,
    /// Half-order M (approximation order 2M).
    #[arg(long = "M")]
    m: Option<String>,
    /// Scaling parameter of the generating functions.
    #[arg(long = "D")]
    d: Option<String>,
    /// Cube half-width of the density support.
    #[arg(long = "A")]
    a: Option<String>,
    /// Substitution parameters: `a,b` (triple map) or `b` (single-exp map).
    #[arg(long = "sub")]
    sub: Option<String>,
    /// Tuner target(s), comma-separated.
    #[arg(long = "target")]
    target: Option<String>,
    /// Trapezoid rule `step,n0,n1`.
    #[arg(long = "rule")]
    rule: Option<String>,
    /// Density name (u1 | u2).
    #[arg(long = "density")]
    density: Option<String>,
    /// Evaluation abscissae x1, comma-separated.
    #[arg(long = "points")]
    points: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact vs approximate Newton-potential values on axis points.
    NewtonTable(Common),
    /// Error ladder over grid refinements with observed rates.
    Convergence(Common),
    /// Tune trapezoid rules for the separable integrand families.
    TuneQuad(Common),
    /// Screened-operator kernel on a Gaussian vs the closed form.
    Advdiff(Common),
    /// Manufactured-solution convergence table for the heat solver.
    Heat(Common),
    /// Build a separated kernel table and write it to --out.
    ExportKernel(Common),
}

fn merged_config(common: &Common) -> Result<Config, CliError> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    cfg.override_opt("n", &common.n);
    cfg.override_opt("h", &common.h);
    cfg.override_opt("M", &common.m);
    cfg.override_opt("D", &common.d);
    cfg.override_opt("A", &common.a);
    cfg.override_opt("sub", &common.sub);
    cfg.override_opt("target", &common.target);
    cfg.override_opt("rule", &common.rule);
    cfg.override_opt("density", &common.density);
    cfg.override_opt("points", &common.points);
    cfg.override_opt("seed", &common.seed);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::NewtonTable(c)
        | Command::Convergence(c)
        | Command::TuneQuad(c)
        | Command::Advdiff(c)
        | Command::Heat(c)
        | Command::ExportKernel(c) => c,
    };
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    let format: Format = common
        .format
        .parse()
        .map_err(|e: String| CliError::Config(e))?;
    let cfg = merged_config(common)?;

    if let Command::ExportKernel(_) = &cli.command {
        let out = common
            .out
            .clone()
            .ok_or_else(|| CliError::Config("export-kernel requires --out".into()))?;
        return commands::export_kernel(&cfg, &out);
    }

    let report = match &cli.command {
        Command::NewtonTable(_) => commands::newton_table(&cfg)?,
        Command::Convergence(_) => commands::convergence(&cfg)?,
        Command::TuneQuad(_) => commands::tune_quad(&cfg)?,
        Command::Advdiff(_) => commands::advdiff(&cfg)?,
        Command::Heat(_) => commands::heat_cmd(&cfg)?,
        Command::ExportKernel(_) => unreachable!(),
    };
    match &common.out {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .map_err(|e| CliError::Other(format!("cannot create {}: {e}", path.display())))?;
            report
                .write(&format, &mut file)
                .map_err(|e| CliError::Other(e.to_string()))?;
        }
        None => {
            let stdout = std::io::stdout();
            report
                .write(&format, &mut stdout.lock())
                .map_err(|e| CliError::Other(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::TunerBudget(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
