use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robin_dd_cli::config::{Config, OUTPUT_ROOT_ENV};
use robin_dd_cli::pipeline::{certify_files, report, run_experiment, run_sweep, SweepAxis};
use robin_dd_cli::{exit, CliError};

/// Robin-Robin domain decomposition experiments for nonlinear elliptic
/// equations with p-structure.
///
/// Exit codes: 0 all certificates pass, 1 config or usage error, 2 the
/// iteration did not converge, 3 a certificate was violated.
#[derive(Parser)]
#[command(name = "robin-dd", version, after_help = format!(
    "Relative output directories are placed under ${OUTPUT_ROOT_ENV} when it is set."
))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run {
        config: PathBuf,
    },
    /// Run one experiment per value of a parameter, in parallel.
    Sweep {
        config: PathBuf,
        /// Parameter to vary: Robin parameter s, exponent p, or mesh size n (h).
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Recompute the certificates of a stored history.
    Certify {
        history: PathBuf,
        summary: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Run { config } => {
            let cfg = Config::load(&config)?;
            let outcome = run_experiment(&cfg, &cfg.output_dir())?;
            report(&outcome, &mut out).ok();
            Ok(outcome.exit_code())
        }
        Command::Sweep { config, axis, values } => {
            let cfg = Config::load(&config)?;
            let dir = cfg.output_dir();
            let (rows, code) = run_sweep(&cfg, &dir, axis, &values)?;
            for r in &rows {
                use std::io::Write;
                let detail = match (&r.error, r.iterations) {
                    (Some(e), _) => e.clone(),
                    (None, Some(n)) => format!("{n} iterations, converged {}", r.converged),
                    _ => String::new(),
                };
                writeln!(out, "{} = {}: exit {} ({detail})", format!("{axis:?}").to_lowercase(), r.value, r.exit_code).ok();
            }
            Ok(code)
        }
        Command::Certify { history, summary } => {
            let res = certify_files(&history, &summary)?;
            use std::io::Write;
            for c in &res.results {
                writeln!(out, "{}: {} ({})", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail).ok();
            }
            writeln!(
                out,
                "stored verdicts {}",
                if res.reproduced { "reproduced" } else { "NOT reproduced" }
            )
            .ok();
            let ok = res.reproduced && res.results.iter().all(|c| c.passed);
            Ok(if ok { exit::OK } else { exit::CERTIFICATE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
