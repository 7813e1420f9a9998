//! Command-line front end for the compliant-arm quadrotor testbench:
//! configuration loading, experiment orchestration, and deterministic
//! CSV/SVG artifact emission.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod artifacts;
pub mod commands;
pub mod config;

/// Failure modes with distinct exit codes: contract violations (bad flags,
/// bad config, impossible requests) exit 1, I/O problems exit 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Contract(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "holoarm",
    about = "Compliant-arm quadrotor simulator and benchmark harness",
    arg_required_else_help = true,
    disable_help_subcommand = true
)]
pub struct Cli {
    /// Random seed (overrides HOLOARM_SEED and the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Key-value config file; missing keys fall back to built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit arm spring/damper constants to recovery-time measurements.
    Fit {
        /// Two-column CSV (t_s,value) of a measured release; fits one channel.
        #[arg(long, requires = "channel")]
        trace: Option<PathBuf>,
        /// Channel of the trace: lateral, up, down or axial.
        #[arg(long, requires = "trace")]
        channel: Option<String>,
    },
    /// Train the hover policy with PPO and save a checkpoint.
    Train,
    /// Evaluate a policy checkpoint on the nominal hover task.
    Eval {
        /// Policy checkpoint produced by `train`.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
    },
    /// Run one benchmark scenario (or all of them).
    Scenario {
        /// lemniscate, payload_circle, hover_disturbance, narrow_gap,
        /// drop_suite, or all.
        #[arg(long)]
        kind: String,
        /// Fly with this policy checkpoint instead of the built-in cascaded
        /// controller (flight scenarios only).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Run the motors-off drop suite (rigid vs compliant).
    Drop,
    /// Run every experiment and emit a consolidated summary with plots.
    Report,
}

/// Parses `args` (without the program name) and runs the request, returning
/// the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let argv = std::iter::once("holoarm".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    // Usage text plus the specific complaint, exit 1.
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
