//! `asrd` — train a small CNN, attack it, detect the attacks by their
//! Fourier magnitudes, and score everything as ASR / ASRD tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use asrd_core::Error;
use config::{keys_help, RunConfig};

#[derive(Parser)]
#[command(
    name = "asrd",
    version,
    about = "Adversarial attacks against a small CNN, frequency-domain detection, ASR/ASRD scoring"
)]
struct Cli {
    /// key=value configuration file ('#' starts a comment)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory that relative paths resolve against
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    workdir: PathBuf,
    /// Worker threads (0 = one per core); results never depend on this
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    workers: usize,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the desk CNN and save its weights
    Train {
        /// Shorthand for --set model.epochs=N
        #[arg(long, value_name = "N")]
        epochs: Option<usize>,
    },
    /// Run one attack and save the clean/adversarial batch
    Attack {
        /// Shorthand for --set attack.method=METHOD
        #[arg(long)]
        method: Option<String>,
        /// Shorthand for --set attack.epsilon=EPS (accepts n/255)
        #[arg(long)]
        epsilon: Option<String>,
    },
    /// Attack, detect, and score one evaluation cell
    Evaluate {
        /// Shorthand for --set output.format=FORMAT
        #[arg(long)]
        format: Option<String>,
    },
    /// Evaluate a grid of cells, resuming from the cell cache
    Sweep,
    /// Re-render an existing CSV report
    Report {
        /// Shorthand for --set report.input=FILE
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
    },
}

/// The derive output, with the accepted configuration keys appended to each
/// subcommand's --help.
fn command_with_key_help() -> clap::Command {
    Cli::command()
        .mut_subcommand("train", |c| {
            c.after_help(keys_help(&["dataset.", "model.", "output."]))
        })
        .mut_subcommand("attack", |c| {
            c.after_help(keys_help(&["dataset.", "model.", "attack.", "output."]))
        })
        .mut_subcommand("evaluate", |c| {
            c.after_help(keys_help(&["dataset.", "model.", "attack.", "detector.", "output."]))
        })
        .mut_subcommand("sweep", |c| {
            c.after_help(keys_help(&["sweep.", "model.", "detector.", "output."]))
        })
        .mut_subcommand("report", |c| c.after_help(keys_help(&["report.", "output."])))
}

fn main() -> ExitCode {
    let matches = command_with_key_help().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(cli: Cli) -> asrd_core::Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| Error::config(format!("cannot size the worker pool: {e}")))?;
    }
    let mut sets = cli.set.clone();
    match &cli.command {
        Cmd::Train { epochs } => {
            if let Some(n) = epochs {
                sets.push(format!("model.epochs={n}"));
            }
        }
        Cmd::Attack { method, epsilon } => {
            if let Some(m) = method {
                sets.push(format!("attack.method={m}"));
            }
            if let Some(e) = epsilon {
                sets.push(format!("attack.epsilon={e}"));
            }
        }
        Cmd::Evaluate { format } => {
            if let Some(f) = format {
                sets.push(format!("output.format={f}"));
            }
        }
        Cmd::Report { input } => {
            if let Some(p) = input {
                sets.push(format!("report.input={}", p.display()));
            }
        }
        Cmd::Sweep => {}
    }
    let config_path = cli.config.as_ref().map(|p| {
        if p.is_absolute() {
            p.clone()
        } else {
            cli.workdir.join(p)
        }
    });
    let cfg = RunConfig::load(config_path.as_deref(), &sets, &cli.workdir)?;
    match cli.command {
        Cmd::Train { .. } => commands::cmd_train(&cfg),
        Cmd::Attack { .. } => commands::cmd_attack(&cfg),
        Cmd::Evaluate { .. } => commands::cmd_evaluate(&cfg),
        Cmd::Sweep => commands::cmd_sweep(&cfg),
        Cmd::Report { .. } => commands::cmd_report(&cfg),
    }
}
