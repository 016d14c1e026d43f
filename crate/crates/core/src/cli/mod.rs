//! Command-line front end.
//!
//! Every subcommand loads the run configuration (profile, then `--config`
//! file), resolves the seed (`--seed`, then `PAINPIPE_SEED`, then the
//! config, which defaults to 0) and prints the seed and the config digest to
//! standard error before doing anything else. Standard output carries only
//! the command's result, so it can be piped.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{resolve_seed, Profile, RunConfig, SeedSource, CONFIG_VERSION, SEED_ENV};

use crate::dataset::Layout;
use crate::error::Error;
use crate::evaluation::ReportFormat;

#[derive(Debug, Parser)]
#[command(name = "painpipe", version, about = "Frame-level pain intensity estimation pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration layered over the profile.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Built-in defaults to start from.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Overrides PAINPIPE_SEED and the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        image_size: Option<usize>,
        /// Target directory; must not exist or be empty.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Read a dataset tree and summarise it.
    Ingest {
        root: Option<PathBuf>,
        #[arg(long)]
        layout: Option<Layout>,
        #[arg(long)]
        n_classes: Option<usize>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Class histogram and inverse-frequency loss weights.
    Stats {
        root: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Subject-disjoint fold plan as JSON.
    Folds {
        /// Dataset to take subjects from (ignored with --subjects).
        root: Option<PathBuf>,
        /// Use S01..SNN instead of a dataset.
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train one fold and save its best checkpoint.
    Train {
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Checkpoint path (default: <output_dir>/fold_<id>.json).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Full cross-validation run; writes the metrics reports.
    Evaluate {
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        /// Keep per-fold checkpoints under <out_dir>/checkpoints.
        #[arg(long)]
        checkpoints: bool,
    },
    /// Convert a metrics report between JSON and CSV.
    Report {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Defaults to the extension of --out, else JSON.
        #[arg(long)]
        format: Option<ReportFormat>,
        /// Written atomically; standard output when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Grouped bar chart (SVG) of report aggregates.
    Plot {
        #[arg(long = "input", value_name = "FILE", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Check a configuration without running anything.
    ValidateConfig { file: Option<PathBuf> },
}

/// Runs the CLI on `argv` (including the program name) with the process's
/// standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match commands::execute(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            let _ = out.flush();
            match e {
                Error::Config { .. } => 2,
                _ => 1,
            }
        }
    }
}
