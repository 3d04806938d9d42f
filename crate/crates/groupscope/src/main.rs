use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use groupscope::config::Config;
use groupscope::pipeline::{Pipeline, RunOptions, Stage, StageReport};
use groupscope::review;

#[derive(Parser)]
#[command(name = "groupscope", version, about = "Social-group appeal detection and analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Start over when the output directory holds a run with a different configuration.
    #[arg(long)]
    force: bool,
    /// Query the LLM transport even when a transcript is recorded.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order.
    Run(Common),
    /// Parse and validate the corpus, split sentences.
    Ingest(Common),
    /// Match the base lexicon against all sentences.
    LabelDict(Common),
    /// Ask the LLM for group phrases in every sentence.
    ExtractLlm(Common),
    /// Embed whitelist phrases and candidates.
    Embed(Common),
    /// Fit the embedding-space filter on the whitelist.
    EsfFit(Common),
    /// Classify candidates and build the review queue.
    EsfFilter(Common),
    /// Apply reviewed decisions and relabel the corpus.
    ExpandDict(Common),
    /// Per-document group salience.
    Salience(Common),
    /// Centre / radical-right similarity per election.
    Similarity(Common),
    /// Group keyness of radical-right vs centre manifestos.
    Keyness(Common),
    /// Assemble the regression panel.
    Panel(Common),
    /// Fit the fixed-effects models and write the table.
    Regress(Common),
    /// Score detection against gold labels.
    Eval(Common),
    /// Serve the review API.
    Serve {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn print_report(r: &StageReport) {
    println!("{}: {} output(s)", r.stage, r.outputs.len());
    for w in &r.warnings {
        eprintln!("  warning: {w}");
    }
}

fn run_pipeline(common: Common, stage: Option<Stage>) -> anyhow::Result<()> {
    let cfg = Config::load(&common.config)?;
    let p = Pipeline::new(
        cfg,
        RunOptions {
            force: common.force,
            no_cache: common.no_cache,
        },
    )?;
    match stage {
        Some(s) => print_report(&p.run_stage(s)?),
        None => p.run_all()?.iter().for_each(print_report),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => run_pipeline(c, None),
        Command::Ingest(c) => run_pipeline(c, Some(Stage::Ingest)),
        Command::LabelDict(c) => run_pipeline(c, Some(Stage::LabelDict)),
        Command::ExtractLlm(c) => run_pipeline(c, Some(Stage::ExtractLlm)),
        Command::Embed(c) => run_pipeline(c, Some(Stage::Embed)),
        Command::EsfFit(c) => run_pipeline(c, Some(Stage::EsfFit)),
        Command::EsfFilter(c) => run_pipeline(c, Some(Stage::EsfFilter)),
        Command::ExpandDict(c) => run_pipeline(c, Some(Stage::ExpandDict)),
        Command::Salience(c) => run_pipeline(c, Some(Stage::Salience)),
        Command::Similarity(c) => run_pipeline(c, Some(Stage::Similarity)),
        Command::Keyness(c) => run_pipeline(c, Some(Stage::Keyness)),
        Command::Panel(c) => run_pipeline(c, Some(Stage::Panel)),
        Command::Regress(c) => run_pipeline(c, Some(Stage::Regress)),
        Command::Eval(c) => run_pipeline(c, Some(Stage::Eval)),
        Command::Serve { config, port, host } => Config::load(&config)
            .map_err(anyhow::Error::from)
            .and_then(|cfg| review::serve_blocking(cfg, &format!("{host}:{port}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
