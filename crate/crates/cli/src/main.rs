//! `msar` command line: identify recurrent patients from visit-level records
//! and mine minimum-similarity association rules that explain them.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, PipelineConfig};
use pipeline::{ExplainTarget, Runner, Stage, UsageError};

#[derive(Parser)]
#[command(
    name = "msar",
    version,
    about = "Recurrent-patient identification and minimum-similarity association rules"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// ICD-prefix mapping CSV (default: the bundled 30-category table).
    #[arg(long, global = true)]
    mapping: Option<PathBuf>,
    /// Output directory (default: out).
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for all randomness (generator and cross-validation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic visit dataset (writes visits.csv)
    Generate,
    /// Evaluate the recurrence criteria per patient (writes flags.csv)
    Identify,
    /// Mine comorbidity rules with confidence and support (writes rules.csv)
    Mine,
    /// Learn the confidence/support weights from the similar-rule graph
    Weights,
    /// Attach MSAR scores to the mined rules
    Score,
    /// Rank the scored rules matching one patient
    Explain {
        /// Look the patient up in the configured dataset.
        #[arg(long)]
        patient_id: Option<String>,
        /// Ad-hoc `;`-separated comorbidity category ids (e.g. "DRUG;HTN;DM;CHF").
        #[arg(long)]
        comorbidities: Option<String>,
        /// How many rules to report.
        #[arg(short = 'k', long, default_value_t = 1)]
        top: usize,
    },
    /// Cross-validate weight stability and ranked-list consistency
    Evaluate,
    /// Population-level recurrence rates (writes cohort_summary.csv)
    Summarize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        mapping: cli.mapping.clone(),
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
    };
    let config = PipelineConfig::load(cli.config.as_deref(), &overrides)
        .map_err(|e| anyhow::anyhow!(UsageError(format!("{e:#}"))))?;
    let mut runner = Runner::new(config)?;

    let (stage, explain) = match cli.command {
        Command::Generate => (Stage::Generate, None),
        Command::Identify => (Stage::Identify, None),
        Command::Mine => (Stage::Mine, None),
        Command::Weights => (Stage::Weights, None),
        Command::Score => (Stage::Score, None),
        Command::Explain {
            patient_id,
            comorbidities,
            top,
        } => (
            Stage::Explain,
            Some(ExplainTarget {
                patient_id,
                comorbidities,
                top,
            }),
        ),
        Command::Evaluate => (Stage::Evaluate, None),
        Command::Summarize => (Stage::Summarize, None),
    };
    runner.run(&[stage], explain.as_ref())
}
