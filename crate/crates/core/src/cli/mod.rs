//! `mfrom` command-line front end.
//!
//! Every command accepts an optional JSON config (`--config`); flags given on
//! the command line override values from the file. Exit codes: 0 success,
//! 1 usage or configuration error, 2 data error, 3 numerical failure.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dataset::format::Encoding;
use crate::error::{Error, Result};
use crate::par::{with_threads, Exec};

pub use commands::{EvalConfig, GenConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "mfrom", version, about = "Multi-fidelity reduced-order models with active subspaces")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Base seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write matrices as CSV instead of binary.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Worker threads (capped by MFROM_THREADS).
    #[arg(long, global = true, value_name = "N")]
    pub parallel: Option<usize>,
    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-fidelity dataset.
    Gen(commands::GenArgs),
    /// Train a reduced-order model.
    Train(commands::TrainArgs),
    /// Predict fields for new designs.
    Predict(commands::PredictArgs),
    /// Evaluate a model against held-out fields.
    Eval(commands::EvalArgs),
    /// Run a replicated benchmark sweep.
    Sweep(commands::SweepArgs),
}

impl Global {
    pub fn encoding(&self) -> Encoding {
        if self.csv {
            Encoding::Csv
        } else {
            Encoding::Binary
        }
    }

    /// Thread count after applying the `MFROM_THREADS` cap.
    pub fn threads(&self) -> Result<usize> {
        let cap = match std::env::var("MFROM_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|n| *n >= 1)
                    .ok_or_else(|| Error::invalid(format!("MFROM_THREADS must be a positive integer, got '{v}'")))?,
            ),
            Err(_) => None,
        };
        if self.parallel == Some(0) {
            return Err(Error::invalid("--parallel must be at least 1"));
        }
        let want = self
            .parallel
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Ok(cap.map_or(want, |c| want.min(c)))
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("MFROM_LOG")
        .format(|buf, rec| writeln!(buf, "{}: {}", rec.level().as_str().to_ascii_lowercase(), rec.args()))
        .try_init();
}

/// Parse `args` (including the program name), run the command and return the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.global.quiet);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let threads = cli.global.threads()?;
    let exec = if threads > 1 { Exec::Parallel } else { Exec::Sequential };
    with_threads(Some(threads), || match &cli.command {
        Command::Gen(a) => commands::gen(&cli.global, a),
        Command::Train(a) => commands::train(&cli.global, a, exec),
        Command::Predict(a) => commands::predict(&cli.global, a, exec),
        Command::Eval(a) => commands::eval(&cli.global, a, exec),
        Command::Sweep(a) => commands::sweep(&cli.global, a, exec),
    })
}
