use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xai_assure::pipeline::{Command, Pipeline, PipelineConfig};

#[derive(Parser)]
#[command(name = "xai-assure", version, about = "Explainability evidence and GSN safety cases for weaning models")]
struct Cli {
    /// Pipeline configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "XAI_ASSURE_OUT")]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Continue past fail-severity data quality findings.
    #[arg(long, global = true)]
    allow_dq_fail: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate the synthetic cohort and its schema.
    GenData,
    /// Run the data quality checks.
    CheckData,
    /// Train every configured model.
    Train,
    /// Compare test AUCs, with a random-label control.
    CompareModels,
    /// Rank training records by influence on one test record.
    Influence,
    /// Local and global feature attributions.
    Attribute,
    /// Counterfactual explanations for one test record.
    Counterfactual,
    /// Robustness score and single-feature flip witnesses.
    Robustness,
    /// Bind reports to the weaning safety argument and compute its status.
    SafetyCase,
    /// Every step above in order.
    RunAll,
    /// Print the effective configuration.
    ShowConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> xai_assure::Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if let Cmd::ShowConfig = cli.command {
        print!("{}", String::from_utf8_lossy(&config.effective().to_json()?));
        return Ok(());
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("xai-assure-out"));
    let pipeline = Pipeline::new(config, out, cli.allow_dq_fail)?;
    let commands: Vec<Command> = match cli.command {
        Cmd::GenData => vec![Command::GenData],
        Cmd::CheckData => vec![Command::CheckData],
        Cmd::Train => vec![Command::Train],
        Cmd::CompareModels => vec![Command::CompareModels],
        Cmd::Influence => vec![Command::Influence],
        Cmd::Attribute => vec![Command::Attribute],
        Cmd::Counterfactual => vec![Command::Counterfactual],
        Cmd::Robustness => vec![Command::Robustness],
        Cmd::SafetyCase => vec![Command::SafetyCase],
        Cmd::RunAll => Command::CHAIN.to_vec(),
        Cmd::ShowConfig => unreachable!(),
    };
    for c in commands {
        let outcome = pipeline.run(c)?;
        println!("{:<15} {}", outcome.command.name(), outcome.summary);
        for a in &outcome.artifacts {
            println!("{:<15}   -> {}", "", pipeline.out_dir().join(a).display());
        }
    }
    Ok(())
}
