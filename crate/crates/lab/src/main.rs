use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use livsic_lab::{run, Command, ExperimentConfig, LabError};

#[derive(Parser)]
#[command(
    name = "livsic",
    version,
    about = "Livsic experiments over hyperbolic toral automorphisms"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON experiment config; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for report.json, CSV and .dat files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    precision_bits: Option<u32>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Enumerate periodic orbits and compare counts with |det(A^n - I)|.
    Orbits,
    /// Close random near-returns to exact periodic orbits.
    Close,
    /// Evaluate the periodic orbit obstruction of the generator.
    Obstruction,
    /// Solve for a transfer function of a matrix or vector cocycle.
    Solve,
    /// Solve for a transfer function of a flow cocycle over the suspension.
    Flowsolve,
    /// Solve for a diffeomorphism-valued transfer function.
    Diffsolve,
    /// Measure distortion growth along the stable bundle.
    Distortion,
    /// Build an invariant conformal structure on the stable bundle.
    Conformal,
    /// Run the randomized invariant battery.
    Proptest,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Orbits => Command::Orbits,
            Cmd::Close => Command::Close,
            Cmd::Obstruction => Command::Obstruction,
            Cmd::Solve => Command::Solve,
            Cmd::Flowsolve => Command::FlowSolve,
            Cmd::Diffsolve => Command::DiffSolve,
            Cmd::Distortion => Command::Distortion,
            Cmd::Conformal => Command::Conformal,
            Cmd::Proptest => Command::Proptest,
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, LabError> {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    }
    .resolve(cli.seed, cli.threads, cli.precision_bits);
    let out = run(cli.command.into(), config)?;
    for path in out.write(&cli.out)? {
        println!("wrote {}", path.display());
    }
    if let Some(msg) = &out.report.status.message {
        eprintln!("{msg}");
    }
    for w in &out.report.warnings {
        eprintln!(
            "warning: {} ({}; margin {:e})",
            w.kind, w.inequality, w.margin
        );
    }
    Ok(out.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
