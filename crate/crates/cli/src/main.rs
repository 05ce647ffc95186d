//! `nlfp`: scenario-driven runs of the PDE solver, the particle system and
//! the verification suite.
//!
//! Exit status: 0 success, 1 failing checks, 2 malformed or invalid scenario,
//! 3 unknown model or check, 4 solver failure, 5 I/O error. On failure a JSON
//! record is printed to stderr and, when the output directory exists, saved as
//! `error.json`.

mod commands;
mod failure;
mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Output;
use failure::Failure;
use scenario::Scenario;

/// Number of worker threads; the only environment variable read.
const THREADS_ENV: &str = "NLFP_THREADS";

#[derive(Parser)]
#[command(name = "nlfp", version, about = "Nonlinear Fokker-Planck solvers and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (`key = value` lines).
    #[arg(long, short)]
    scenario: Option<PathBuf>,
    /// Override one scenario key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, short, default_value = "nlfp-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the PDE and write snapshots, metadata and a summary.
    RunPde(RunArgs),
    /// Simulate the particle system, optionally against a reference PDE run.
    RunParticles(RunArgs),
    /// Run verification checks; exits 1 if any fails.
    RunVerify {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated check names (empty for none); overrides the `checks` key.
        #[arg(long)]
        checks: Option<String>,
    },
    /// Self-convergence study over the `convergence_steps` key.
    Convergence(RunArgs),
    /// Per-snapshot L1 distances between two output directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write compare.csv and compare.json here instead of printing.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Invalid(e.to_string()))
}

fn load(args: &RunArgs, checks: Option<&str>) -> Result<Scenario, Failure> {
    let mut s = match &args.scenario {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            Scenario::parse(&text)?
        }
        None => Scenario::default(),
    };
    for pair in &args.set {
        s.apply_override(pair)?;
    }
    if let Some(c) = checks {
        s.set("checks", c.trim())
            .map_err(|message| Failure::Parse { line: None, message })?;
    }
    s.validate()?;
    Ok(s)
}

fn run(cli: &Cli) -> Result<i32, (Failure, Option<PathBuf>)> {
    configure_threads().map_err(|f| (f, None))?;
    let (args, checks) = match &cli.command {
        Command::Compare { a, b, out } => {
            let o = out.as_deref().map(Output::create).transpose().map_err(|f| (f, None))?;
            return commands::compare(a, b, o.as_ref()).map_err(|f| (f, out.clone()));
        }
        Command::RunPde(r) | Command::RunParticles(r) | Command::Convergence(r) => (r, None),
        Command::RunVerify { run, checks } => (run, checks.as_deref()),
    };
    let dir = args.out.clone();
    let scenario = load(args, checks).map_err(|f| (f, Some(dir.clone())))?;
    let out = Output::create(&dir).map_err(|f| (f, None))?;
    let result = match &cli.command {
        Command::RunPde(_) => commands::run_pde(&scenario, &out),
        Command::RunParticles(_) => commands::run_particles(&scenario, &out),
        Command::RunVerify { .. } => commands::run_verify(&scenario, &out),
        Command::Convergence(_) => commands::convergence(&scenario, &out),
        Command::Compare { .. } => unreachable!("handled above"),
    };
    result.map_err(|f| (f, Some(dir)))
}

fn report(f: &Failure, dir: Option<&Path>) {
    let record = f.record();
    eprintln!("error: {f}");
    eprintln!("{record}");
    if let Some(d) = dir {
        if fs::create_dir_all(d).is_ok() {
            let _ = fs::write(d.join("error.json"), format!("{record:#}\n"));
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err((f, dir)) => {
            report(&f, dir.as_deref());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
