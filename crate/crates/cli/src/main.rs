use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shearwave_cli::{CliError, Command, Pipeline, RunConfig};

#[derive(Parser)]
#[command(name = "shearwave", version, about = "Capillary-gravity waves on shear flows: dispersion, kernels, residuals, obstruction")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Riccati solver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Grid sizes as N1xN2xN3.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Do not print the result document.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Dispersion residual over lattice wavevectors (CSV).
    DispersionScan,
    /// Surface tension making the configured target resonant.
    Calibrate,
    /// Assemble and dump the first-order kernel fields.
    Kernel,
    /// Nonlinear residual of a trivial (or perturbed) state.
    Verify,
    /// Residual scaling of background + eps * kernel.
    Probe,
    /// Second-order obstruction and verdict.
    Obstruct,
    /// Run every stage and bundle the results.
    Report,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::DispersionScan => Command::DispersionScan,
            Sub::Calibrate => Command::Calibrate,
            Sub::Kernel => Command::Kernel,
            Sub::Verify => Command::Verify,
            Sub::Probe => Command::Probe,
            Sub::Obstruct => Command::Obstruct,
            Sub::Report => Command::Report,
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("SHEARWAVE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn execute(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config {
        path: "--config".into(),
        message: "a configuration file is required".into(),
    })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(g) = &cli.grid {
        cfg.override_grid(g)?;
    }
    if let Some(t) = cli.tol {
        cfg.override_tol(t)?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("shearwave-out"));
    Pipeline::new(cfg, out)?.run(cli.command.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match execute(&cli) {
        Ok(doc) => {
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&doc).expect("json serializes"));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&e.record()).expect("json serializes"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
