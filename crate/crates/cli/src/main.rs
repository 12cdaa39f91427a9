//! `rvrecon`: QC, target extraction, windowing, cross-validated training,
//! evaluation, synthetic data and reporting from the command line.

mod commands;
mod config;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rvrecon::Measure;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "rvrecon",
    version,
    about = "Reconstruct RV/RVT from ROI-averaged BOLD timeseries"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set run.alignment=end`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set run.seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file, or directory for `train` and `synth`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Do not echo the resolved configuration to stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Screen respiratory traces and write one JSON report per file.
    Qc {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Extract RV or RVT on the volume grid from one trace.
    Extract {
        trace: PathBuf,
        #[arg(long)]
        measure: Option<Measure>,
        /// Repetition time in seconds (default: run.tr_seconds).
        #[arg(long)]
        tr: Option<f64>,
        /// Number of volumes (default: as many as the trace covers).
        #[arg(long)]
        volumes: Option<usize>,
        /// Extract even when QC marks the trace unusable.
        #[arg(long)]
        force: bool,
    },
    /// Summarise the windowed examples each scan of a manifest yields.
    Windows { manifest: PathBuf },
    /// k-fold cross-validated training and evaluation over a manifest.
    Train { manifest: PathBuf },
    /// Evaluate saved fold weights on the scans of a manifest.
    Eval {
        manifest: PathBuf,
        #[arg(long, value_name = "PATH")]
        weights: PathBuf,
    },
    /// Generate a synthetic corpus with a manifest.
    Synth {
        #[arg(long)]
        n_scans: Option<usize>,
    },
    /// Five-number summaries of a metric stream (stdin when no path).
    Report {
        stream: Option<PathBuf>,
        /// Emit summary records as JSON lines instead of a table.
        #[arg(long)]
        json: bool,
    },
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: Option<PathBuf>,
}

impl Context {
    /// Output directory for commands that write several files.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| self.cfg.paths.out.clone())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("run.seed={s}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides).map_err(CliError::Io)?;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::io(anyhow::anyhow!("--jobs must be at least 1")));
        }
        rvrecon::par::set_threads(j);
    }
    if !cli.quiet {
        eprintln!("# resolved configuration\n{}", cfg.to_toml());
    }
    let ctx = Context { cfg, out: cli.out };
    match cli.command {
        Command::Qc { traces } => commands::qc::run(&ctx, &traces),
        Command::Extract {
            trace,
            measure,
            tr,
            volumes,
            force,
        } => commands::extract::run(&ctx, &trace, measure, tr, volumes, force),
        Command::Windows { manifest } => commands::windows::run(&ctx, &manifest),
        Command::Train { manifest } => commands::train::run_train(&ctx, &manifest),
        Command::Eval { manifest, weights } => commands::train::run_eval(&ctx, &manifest, &weights),
        Command::Synth { n_scans } => commands::synth::run(&ctx, n_scans),
        Command::Report { stream, json } => commands::report::run(&ctx, stream.as_deref(), json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
