//! Batch CLI for the speaker-adaptation feature toolkit. Every subcommand
//! reads and writes the line-oriented text formats of the library, validates
//! before writing, and replaces output files atomically, so a failed run
//! leaves no partial artifacts.

mod commands;
mod pipeline;
mod util;

use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use anyhow::{Context, Result};
use clap::Parser;

#[derive(Parser)]
#[command(name = "gmmdkit", version, about = "Speaker-adaptation feature toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub globals: Globals,
    #[command(subcommand)]
    pub command: commands::Command,
}

#[derive(clap::Args, Clone)]
pub struct Globals {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 keeps one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// off, error, warn, info, debug, or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
}

static INITIALIZED: AtomicBool = AtomicBool::new(false);

/// Applies the global flags once per process. Pipeline stages run in
/// process, so only the outermost invocation gets to configure logging and
/// the thread pool; stage-level overrides are rejected by the pipeline
/// runner instead of being silently ignored.
pub fn init_process(globals: &Globals) -> Result<()> {
    if INITIALIZED.swap(true, Ordering::SeqCst) {
        return Ok(());
    }
    let level: log::LevelFilter = globals
        .log_level
        .parse()
        .with_context(|| format!("unknown log level {:?}", globals.log_level))?;
    env_logger::Builder::new().filter_level(level).init();
    if globals.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(globals.threads)
            .build_global()
            .context("thread pool already configured")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = init_process(&cli.globals).and_then(|()| commands::run(&cli.globals, &cli.command));
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
