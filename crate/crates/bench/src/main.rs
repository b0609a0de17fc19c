use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use distrobust_bench::config::{BudgetPreset, ExperimentConfig};
use distrobust_bench::manifest::RunManifest;
use distrobust_bench::pipeline::{Run, Stage};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Trains heterogeneous weak learners, attacks their voted ensembles with
/// transfer attacks and summarises robustness.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Experiment config (TOML). Defaults to the built-in smoke config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel work units per stage.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Replace the configured training budget preset.
    #[arg(long, global = true, value_enum)]
    budget_preset: Option<BudgetPreset>,
    /// No progress lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tune and train the master models used as attack surrogates.
    Surrogates,
    /// Split the training set across nodes.
    Partition,
    /// Train every scenario's weak learners.
    Train,
    /// Generate adversarial batches from the surrogates.
    Attack,
    /// Clean and adversarial records for every voting scheme.
    Evaluate,
    /// Surrogate-to-node gradient similarity heatmaps.
    Gradsim,
    /// Accuracy/robustness points and their frontier.
    Pareto,
    /// OLS over the records.
    Regress,
    /// Mean ± CI tables over seeds.
    Report,
    /// Every stage in order.
    All,
    /// Check the manifest's file hashes.
    Verify,
    /// Print the effective config.
    ShowConfig,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::smoke(),
    };
    if let Some(s) = cli.seed {
        config.seeds = vec![s];
    }
    if let Some(o) = cli.out {
        config.out = o;
    }
    if let Some(p) = cli.budget_preset {
        config.budget_preset = p;
    }
    config.validate()?;
    let out = config.out.clone();
    let stage = match cli.command {
        Command::ShowConfig => {
            print!("{}", config.to_toml());
            return Ok(());
        }
        Command::Verify => {
            let m: RunManifest = distrobust_bench::artifacts::read_json(&out.join(distrobust_bench::manifest::MANIFEST_FILE))?;
            let errs = m.verify(&out);
            for e in &errs {
                eprintln!("{}", e);
            }
            anyhow::ensure!(errs.is_empty(), "{} of {} files failed verification", errs.len(), m.files.len());
            println!("{} files verified", m.files.len());
            return Ok(());
        }
        Command::Surrogates => Some(Stage::Surrogates),
        Command::Partition => Some(Stage::Partition),
        Command::Train => Some(Stage::Train),
        Command::Attack => Some(Stage::Attack),
        Command::Evaluate => Some(Stage::Evaluate),
        Command::Gradsim => Some(Stage::Gradsim),
        Command::Pareto => Some(Stage::Pareto),
        Command::Regress => Some(Stage::Regress),
        Command::Report => Some(Stage::Report),
        Command::All => None,
    };
    let mut run = Run::open(config, &out, cli.jobs)?;
    run.quiet = cli.quiet;
    match stage {
        Some(s) => run.run_stage(s),
        None => run.run_all(),
    }
}
