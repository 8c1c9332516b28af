//! Batch driver: `shearecho <command> --config run.toml --out dir`.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Check(_) => 4,
        }
    }
}

impl From<shearecho::Error> for CliError {
    fn from(e: shearecho::Error) -> Self {
        use shearecho::Error as E;
        match e {
            E::InvalidParameter { .. } | E::InvalidConfig(_) | E::Empty(_) | E::MismatchedInit(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "shearecho", version, about = "Echo chains and norm inflation around sheared traveling waves")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Wave amplitude ODE, decay bound and inviscid exponents.
    Wave(Common),
    /// One mode-chain simulation written as a trajectory CSV.
    Simulate(Common),
    /// Echo gains per resonant interval, optional bootstrap and persistence checks.
    EchoReport(Common),
    /// Inflation over a frequency grid and the cube-root fit.
    Sweep(Common),
    /// Composed multi-frequency datum and its Sobolev norms in time.
    Blowup(Common),
    /// Coefficient integrals against their analytic bounds.
    CheckCoeffs(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for frequency sweeps; 0 uses all cores.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Recorded in the run metadata; the dynamics are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cmd, common) = match cli.cmd {
        Cmd::Wave(c) => ("wave", c),
        Cmd::Simulate(c) => ("simulate", c),
        Cmd::EchoReport(c) => ("echo-report", c),
        Cmd::Sweep(c) => ("sweep", c),
        Cmd::Blowup(c) => ("blowup", c),
        Cmd::CheckCoeffs(c) => ("check-coeffs", c),
    };
    let (cfg, base) = config::RunConfig::load(&common.config)?;
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Io(format!("{}: {e}", common.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    let ctx = commands::Ctx {
        cfg,
        base,
        out: common.out,
        seed: common.seed,
    };
    pool.install(|| match cmd {
        "wave" => commands::wave(&ctx),
        "simulate" => commands::simulate(&ctx),
        "echo-report" => commands::echo_report(&ctx),
        "sweep" => commands::sweep(&ctx),
        "blowup" => commands::blowup(&ctx),
        _ => commands::check_coeffs(&ctx),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shearecho: {e}");
            ExitCode::from(e.code())
        }
    }
}
