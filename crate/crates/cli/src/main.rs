//! `rigserve` command-line tool.

mod client;
mod commands;
mod virtual_run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Bind(String),
    #[error("{0}")]
    Failed(String),
    #[error("connection error: {0}")]
    Connect(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Bind(_) => 3,
            CliError::Connect(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "rigserve",
    version,
    about = "Real-time avatar rig server and tools"
)]
pub struct Cli {
    /// Server address for networked subcommands.
    #[arg(long, global = true, default_value = "127.0.0.1:4618")]
    pub server: String,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Run against an in-process session on a virtual clock instead of a server.
    #[arg(long, global = true)]
    pub virtual_time: bool,
    /// Server config file (JSON).
    #[arg(long, global = true, env = "RIGSERVE_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run the avatar server.
    Serve {
        /// Print the effective config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Check a rig definition file.
    Validate { rig: PathBuf },
    /// Play a phoneme track (`phoneme,start_ms,duration_ms` lines).
    Play {
        track: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        offset_ms: f64,
        /// Print the compiled per-tick viseme table without connecting.
        #[arg(long)]
        dry_run: bool,
    },
    /// Replay a recorded AU probability stream as AuFrame commands.
    ReplayAus {
        stream: PathBuf,
        /// EMA coefficient applied to the probabilities.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Round probabilities to 0/1 at this threshold before smoothing.
        #[arg(long)]
        threshold: Option<f64>,
        /// Playback speed; 2.0 halves every timestamp.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Lip-sync an utterance built from a pronunciation lexicon.
    Say {
        text: String,
        /// `word: ph1 ph2 ...` lines; the bundled demo lexicon by default.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Treat TEXT as a prompt and speak the matching reply from this
        /// JSON object of prompt to reply.
        #[arg(long)]
        canned: Option<PathBuf>,
        /// Phonemes per second.
        #[arg(long, default_value_t = 12.5)]
        rate: f64,
        #[arg(long)]
        dry_run: bool,
    },
    /// Run a puppet script (JSON array of commands with `at_ms`).
    Puppet {
        script: PathBuf,
        /// Virtual-time run length; defaults to the last command plus 1 s.
        #[arg(long)]
        duration_ms: Option<f64>,
        /// Write the virtual-time frame stream here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load-test a server: subscribers plus a paced command stream.
    Bench {
        #[arg(long, default_value_t = 8)]
        subscribers: usize,
        #[arg(long, default_value_t = 500.0)]
        rate: f64,
        #[arg(long, default_value_t = 30.0)]
        seconds: f64,
        /// Use the server at --server instead of starting one in-process.
        #[arg(long)]
        connect: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if json {
                println!(
                    "{}",
                    serde_json::json!({"error": e.to_string(), "exit_code": e.exit_code()})
                );
            }
            eprintln!("rigserve: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
