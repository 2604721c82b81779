//! Command line front end: runs JSON scenarios through the solvers and
//! writes CSV and JSON outputs, and hosts the built-in check battery.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 failed check.

pub mod error;
pub mod scenario;
pub mod selftest;
pub mod table;
pub mod tasks;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "retarda", version, about = "Mild solutions of linear retarded functional differential equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scenario (or array of scenarios) in a JSON config.
    Run {
        config: PathBuf,
        /// Exit with status 4 when the task's acceptance check fails.
        #[arg(long)]
        assert: bool,
        /// Directory for output files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the built-in check battery (seed: RETARDA_SEED, tolerance factor: RETARDA_TOL_SCALE).
    Selftest {
        /// Coarse grids only.
        #[arg(long)]
        quick: bool,
        /// Also write the report to DIR/selftest.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the command line `args` (program name first) and returns the exit status.
/// `env` looks up environment variables.
pub fn run_cli<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { config, assert, out } => run_config(&config, &out, assert, stdout),
        Command::Selftest { quick, out } => run_selftest(quick, out.as_deref(), env, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn run_config(config: &Path, out: &Path, check: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scenarios = scenario::load(config)?;
    if let [single] = scenarios.as_slice() {
        let outcome = tasks::run_scenario(single, out, check)?;
        for line in outcome.lines {
            writeln!(stdout, "{line}")?;
        }
        return Ok(());
    }
    let dirs: Vec<PathBuf> = scenarios
        .iter()
        .enumerate()
        .map(|(k, s)| out.join(s.name.clone().unwrap_or_else(|| format!("scenario_{k}"))))
        .collect();
    let results: Vec<_> = scenarios
        .par_iter()
        .zip(&dirs)
        .map(|(s, dir)| tasks::run_scenario(s, dir, check))
        .collect();
    let mut worst: Option<CliError> = None;
    for (k, result) in results.into_iter().enumerate() {
        match result {
            Ok(outcome) => {
                for line in outcome.lines {
                    writeln!(stdout, "[{k}] {line}")?;
                }
            }
            Err(e) => {
                writeln!(stdout, "[{k}] error: {e}")?;
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn run_selftest(
    quick: bool,
    out: Option<&Path>,
    env: &dyn Fn(&str) -> Option<String>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let seed = match env("RETARDA_SEED") {
        None => selftest::DEFAULT_SEED,
        Some(s) => s
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::validation("RETARDA_SEED", format!("{s:?} is not an unsigned integer")))?,
    };
    let scale = match env("RETARDA_TOL_SCALE") {
        None => 1.0,
        Some(s) => match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            _ => return Err(CliError::validation("RETARDA_TOL_SCALE", format!("{s:?} is not a nonnegative number"))),
        },
    };
    let report = selftest::run(quick, seed, scale);
    let text = format!("seed {seed}\n{}", report.render());
    stdout.write_all(text.as_bytes())?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("selftest.txt"), &text)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Assertion("self test failed".into()))
    }
}
