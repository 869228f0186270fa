use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tensorsar_core::io::ResultsLayout;
use tensorsar_core::synth::SynthConfig;

use crate::serve::{self, AppState};
use crate::stages::{self, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tensorsar", version, about = "Speech-artifact removal for overt-speech EEG")]
pub struct Cli {
    /// Pipeline configuration (JSON). Defaults to $TENSORSAR_CONFIG, then the
    /// config stored in the results directory, then built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log as JSON lines on stderr.
    #[arg(long, global = true)]
    pub json_logs: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ResultsArg {
    /// Results directory written by `preprocess`.
    #[arg(long, alias = "in")]
    pub results: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic sessions with ground truth.
    Synth {
        #[arg(long, default_value_t = 8)]
        subjects: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Trials per subject.
        #[arg(long)]
        trials: Option<usize>,
        /// Artifact-to-brain amplitude ratio, dB.
        #[arg(long)]
        snr_db: Option<f64>,
    },
    /// Reject, baseline, filter, re-reference, resample, detect onsets.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the rank sweep and select a rank per subject.
    Decompose(ResultsArg),
    /// Label components against the lip EMG.
    Detect(ResultsArg),
    /// Build the three clusters from the labels.
    Clean(ResultsArg),
    /// Run the BSS-CCA baseline.
    Baseline(ResultsArg),
    /// Write report.csv/json/txt.
    Evaluate(ResultsArg),
    /// All stages from a dataset to a report.
    Run {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the component-review API.
    Serve {
        #[command(flatten)]
        results: ResultsArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory with a built UI bundle to serve at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

fn results_of(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Decompose(r) | Command::Detect(r) | Command::Clean(r) | Command::Baseline(r) | Command::Evaluate(r) => {
            Some(&r.results)
        }
        Command::Serve { results, .. } => Some(&results.results),
        _ => None,
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = stages::load_config(cli.config.as_deref(), results_of(&cli.command))?;
    match &cli.command {
        Command::Synth {
            subjects,
            seed,
            out,
            trials,
            snr_db,
        } => {
            let mut s = SynthConfig {
                n_subjects: *subjects,
                seed: *seed,
                ..SynthConfig::default()
            };
            if let Some(t) = trials {
                s.n_trials = *t;
            }
            if let Some(db) = snr_db {
                s.artifact_snr_db = *db;
            }
            stages::synth(&s, out, &cfg)?;
        }
        Command::Preprocess { input, out } => {
            stages::preprocess(input, out, &cfg)?;
        }
        Command::Decompose(r) => {
            stages::decompose(&r.results, &cfg)?;
        }
        Command::Detect(r) => stages::detect(&r.results, &cfg)?,
        Command::Clean(r) => stages::clean(&r.results, &cfg)?,
        Command::Baseline(r) => stages::baseline(&r.results, &cfg)?,
        Command::Evaluate(r) => {
            stages::evaluate_stage(&r.results, &cfg)?;
        }
        Command::Run { input, out } => {
            stages::run(input, out, &cfg)?;
        }
        Command::Serve { results, addr, ui_dir } => {
            let state = AppState::load(ResultsLayout::new(&results.results), cfg)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(format!("cannot start runtime: {e}")))?;
            rt.block_on(serve::serve(state, *addr, ui_dir.clone()))?;
        }
    }
    Ok(())
}
