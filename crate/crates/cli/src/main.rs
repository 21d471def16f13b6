use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use logkdv_cli::config::{Command, Overrides, RunConfig};
use logkdv_cli::run::{execute, load_run, verdict_table};
use logkdv_cli::CliError;

/// Travelling waves of precompressed Hertzian lattices and their
/// logarithmic KdV limit.
#[derive(Parser)]
#[command(name = "logkdv", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for run output.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiments run concurrently on this many threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    p_cut: Option<f64>,
    /// Comma-separated epsilon list for sweeps.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    epsilons: Option<Vec<f64>>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Slow-time horizon; lattice runs last tau / eps^3.
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    n_sites: Option<usize>,
    /// Also write SVG charts of every curve.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stationary and travelling waves, with the epsilon sweep.
    Wave,
    /// Spectra of the linearized operators and the truncation bound.
    Spectrum,
    /// Lattice energy conservation and energy-expansion diagnostics.
    Simulate,
    /// Log-KdV evolution and the Gaussian identity.
    Pde,
    /// Lattice against the log-KdV approximation over slow times.
    Justify,
    /// Perturbed travelling waves on the lattice.
    Stability,
    /// Approximation residuals and the sampling inequality.
    Residuals,
    /// Print the verdicts of a finished run.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        workers: cli.workers,
        svg: cli.svg,
        lambda: cli.lambda,
        epsilon: cli.epsilon,
        p_cut: cli.p_cut,
        epsilons: cli.epsilons.clone(),
        delta: cli.delta,
        dt: cli.dt,
        tau: cli.tau,
        n_sites: cli.n_sites,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<i32, CliError> {
    let command = match &cli.command {
        Cmd::Report { dir } => {
            let summary = load_run(dir)?;
            print!("{}", verdict_table(&summary));
            return Ok(if summary.aborted { 3 } else if summary.passed { 0 } else { 1 });
        }
        Cmd::Wave => Command::Wave,
        Cmd::Spectrum => Command::Spectrum,
        Cmd::Simulate => Command::Simulate,
        Cmd::Pde => Command::Pde,
        Cmd::Justify => Command::Justify,
        Cmd::Stability => Command::Stability,
        Cmd::Residuals => Command::Residuals,
    };
    let cfg = resolve(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(0);
    }
    let outcome = execute(command, &cfg, &cli.out)?;
    print!("{}", verdict_table(&outcome.summary));
    println!("output: {}", outcome.dir.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
