//! `freetime`: batch driver for the periodic-orbit solver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 diagnosed
//! failure, 3 numeric failure. Every non-zero exit prints one line
//! `code=<reason> message=<text>` on stderr.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{Context, Outcome};
use config::RunConfig;
use freetime::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "freetime", version, about = "Periodic orbits of Tonelli Lagrangians on energy levels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, env = "FREETIME_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, env = "FREETIME_SEED")]
    seed: Option<u64>,
    /// Output directory (default: the configured `out`, else `freetime-out`).
    #[arg(long, global = true, env = "FREETIME_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FREETIME_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find one periodic orbit at energy `k`.
    FindOrbit,
    /// Mountain-pass levels over a grid of energies.
    Sweep,
    /// Estimate e0, c_u, c0 and c.
    Critvals,
    /// Conjugate times and second-variation spectrum of a saved orbit.
    Conjugate {
        /// Loop file (as written by `find-orbit`); overrides `orbit_file`.
        orbit_file: Option<PathBuf>,
    },
    /// Long-period barrier scan and limit measure of a blow-up sequence.
    PsDemo,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::RefineFailed(_) | Error::GeometryLost(_) => 2,
        Error::Numeric(_) | Error::Overflow { .. } => 3,
        _ => 1,
    }
}

fn fail(code: &str, message: &str, status: u8) -> ExitCode {
    let one_line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("code={code} message={one_line}");
    ExitCode::from(status)
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    let path = cli.config.ok_or_else(|| Error::Config {
        field: "config".into(),
        message: "a configuration file is required (--config or FREETIME_CONFIG)".into(),
    })?;
    let cfg = RunConfig::load(&path)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                field: "threads".into(),
                message: e.to_string(),
            })?;
    }
    let out = cli
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("freetime-out"));
    let seed = cli.seed.unwrap_or(cfg.seed);
    let name = match &cli.command {
        Command::FindOrbit => "find-orbit",
        Command::Sweep => "sweep",
        Command::Critvals => "critvals",
        Command::Conjugate { .. } => "conjugate",
        Command::PsDemo => "ps-demo",
    };
    let ctx = Context {
        cfg,
        out,
        seed,
        command: name,
    };
    match &cli.command {
        Command::FindOrbit => commands::find_orbit(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Critvals => commands::critvals(&ctx),
        Command::Conjugate { orbit_file } => commands::conjugate(&ctx, orbit_file.as_deref()),
        Command::PsDemo => commands::ps_demo(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "), 1);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(code, message)) => fail(code, &message, 2),
        Err(e) => fail(e.code(), &e.to_string(), exit_code(&e)),
    }
}
