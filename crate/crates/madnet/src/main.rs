use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use madnet::cli::{self, CliError, Ctx, RunConfig};

#[derive(Parser)]
#[command(name = "madnet", version, about = "Multi-party conversation generation with EM addressee deduction")]
struct Cli {
    /// Run configuration (JSON with a required "version" field).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every seed in the config (synthesis, model init, training).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output root; relative config paths resolve under it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Proceed despite a checkpoint/config hash mismatch.
    #[arg(long, global = true)]
    force: bool,

    /// Diagnostic mode: drop positional embeddings during node
    /// initialization.
    #[arg(long, global = true)]
    diag_no_positional: bool,

    /// Diagnostic mode: treat every pair class as its latent default during
    /// graph iteration.
    #[arg(long, global = true)]
    diag_uniform_latent: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus, gold sidecar, and vocabulary.
    Synth,
    /// Report missing-label rate and reply-fragment statistics.
    Stats,
    /// Domain adaptation: train from random init on fully-connected graphs.
    Train,
    /// Initialize silver addressee labels with the adapted model.
    InitAddr,
    /// Run alternating E/M rounds from the initialized labels.
    Em,
    /// Score deduced addressees against gold, with heuristic baselines.
    Deduce,
    /// Greedy-decode responses for every instance.
    Generate,
    /// Score a hypotheses file with BLEU/METEOR/ROUGE-L.
    Eval,
}

fn run(args: Cli) -> Result<serde_json::Value, CliError> {
    let config_path = args
        .config
        .ok_or_else(|| CliError::Validation("--config <path> is required".into()))?;
    let mut cfg = RunConfig::from_file(&config_path)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    if args.diag_no_positional {
        cfg.model.diagnostic.no_positional = true;
    }
    if args.diag_uniform_latent {
        cfg.model.diagnostic.uniform_latent = true;
    }
    let ctx = Ctx::new(cfg, args.out, args.force);
    match args.command {
        Command::Synth => cli::cmd_synth(&ctx),
        Command::Stats => cli::cmd_stats(&ctx),
        Command::Train => cli::cmd_train(&ctx),
        Command::InitAddr => cli::cmd_init_addr(&ctx),
        Command::Em => cli::cmd_em(&ctx),
        Command::Deduce => cli::cmd_deduce(&ctx),
        Command::Generate => cli::cmd_generate(&ctx),
        Command::Eval => cli::cmd_eval(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Cli::parse();
    match run(args) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary"));
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
