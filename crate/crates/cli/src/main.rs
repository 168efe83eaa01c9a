//! `armcoag`: closed forms, kinetic integration and particle simulation for
//! arm-limited coagulation.
//!
//! Exit status: 0 on success, 1 on a numerical-domain error (for example a
//! symmetric time past gelation), 2 on invalid configuration.

mod commands;
mod config;
mod examples;
mod failure;
mod measure_arg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Source;
use crate::config::RunConfig;
use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "armcoag", version, about, after_help = measure_arg::GRAMMAR)]
#[command(after_long_help = format!(
    "{}\n\nOUTPUT\n  Files go to --out, else to ${} (default: current directory).\n  Floats are written with 17 significant digits.",
    measure_arg::GRAMMAR,
    config::OUT_DIR_ENV,
))]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form concentration table `t,a,m,c`
    Solve,
    /// Truncated kinetic integration; writes a table and a JSON sidecar
    Integrate,
    /// Stochastic particle simulation `t,a,m,c_hat,n,seed`
    Mc {
        /// Also write the event log as JSON Lines
        #[arg(long, value_name = "FILE")]
        events: Option<PathBuf>,
    },
    /// Critical time of the symmetric model, and optionally the first times
    /// the second arm moment reaches given levels
    Geltime {
        /// Comma-separated levels r for which to report the crossing time
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        gamma: Vec<f64>,
    },
    /// Largest absolute discrepancy between two sources on the table window
    Compare {
        #[arg(long, value_enum)]
        left: Source,
        #[arg(long, value_enum)]
        right: Source,
    },
    /// Regenerate the worked examples as named CSV files in the output directory
    Examples,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Examples = cli.command {
        let dir = commands::out_dir(cli.run.out.as_deref())?;
        return examples::run(&dir);
    }
    let mut cfg = cli.run;
    if let Command::Geltime { .. } = cli.command {
        // Only the symmetric model gels.
        cfg.model.get_or_insert(config::ModelArg::Symmetric);
    }
    let run = cfg.resolve()?;
    match cli.command {
        Command::Solve => commands::solve(&run),
        Command::Integrate => commands::integrate(&run),
        Command::Mc { events } => commands::mc(&run, events.as_deref()),
        Command::Geltime { gamma } => commands::geltime(&run, &gamma),
        Command::Compare { left, right } => commands::compare(&run, left, right),
        Command::Examples => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("armcoag: {e}");
            ExitCode::from(e.code())
        }
    }
}
