mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;

/// Build static word vectors from mention stores and evaluate them.
#[derive(Parser, Debug)]
#[command(name = "mentionvec", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the lexical-classification split seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Where the command writes its main result.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn a mention store into a text embedding.
    Aggregate,
    /// Lexical classification with per-class linear SVMs.
    EvalLexclass,
    /// Spearman correlation on word-similarity datasets.
    EvalSim {
        /// Also list pairs where gold and cosine quartiles disagree.
        #[arg(long)]
        quartiles: bool,
    },
    /// Nearest words by cosine.
    Neighbors {
        word: String,
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(short, default_value_t = 10)]
        n: usize,
    },
    /// Print the configuration with defaults filled in.
    ShowConfig,
    /// Header and vocabulary statistics of a mention store.
    InspectStore {
        store: Option<PathBuf>,
        /// Print each word with its mention count.
        #[arg(long)]
        vocab: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let output = cli.output.as_deref();
    match cli.command {
        Command::Aggregate => commands::aggregate_cmd(&cfg, output),
        Command::EvalLexclass => commands::eval_lexclass_cmd(&cfg, cli.seed, output),
        Command::EvalSim { quartiles } => commands::eval_sim_cmd(&cfg, output, quartiles),
        Command::Neighbors { word, embedding, n } => {
            commands::neighbors_cmd(&cfg, embedding.as_deref(), &word, n, output)
        }
        Command::ShowConfig => {
            let mut out = commands::open_output(output)?;
            out.write_all(cfg.to_toml()?.as_bytes())?;
            Ok(out.flush()?)
        }
        Command::InspectStore { store, vocab } => {
            commands::inspect_store_cmd(&cfg, store.as_deref(), vocab, output)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
