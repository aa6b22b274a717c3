mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use absa_core::eval::Approach;
use absa_core::training::AdaptationStrategy;
use absa_core::TransformMethod;
use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "absa", version, about = "Aspect-based sentiment analysis as sentence-pair classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command. Flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Vocabulary file, one token per line.
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    /// Review dataset (JSON lines).
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true, value_parser = PossibleValuesParser::new(["nli-b", "nli-m", "qa-b", "qa-m"])
        .map(|s| s.parse::<TransformMethod>().expect("listed value")))]
    pub method: Option<TransformMethod>,
    #[arg(long, global = true, value_parser = PossibleValuesParser::new(["feature-extraction", "fine-tuning"])
        .map(|s| s.parse::<AdaptationStrategy>().expect("listed value")))]
    pub strategy: Option<AdaptationStrategy>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

fn approach_parser() -> impl clap::builder::TypedValueParser<Value = Approach> {
    PossibleValuesParser::new(["sentence-pair", "single-sentence"]).map(|s| s.parse::<Approach>().expect("listed value"))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic review dataset.
    Generate {
        /// Number of reviews (defaults to the config's generate.reviews).
        #[arg(long)]
        n: Option<usize>,
        /// Lexicon JSON file; the built-in hotel lexicon otherwise.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Category list file, one per line.
        #[arg(long)]
        categories: Option<PathBuf>,
        /// Also write a vocabulary covering the generated text.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
    /// Print WordPiece tokens per input line and an out-of-vocabulary summary.
    Tokenize {
        /// Text to tokenize; may be repeated.
        #[arg(long)]
        text: Vec<String>,
        /// File whose lines are tokenized.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Expand reviews into sentence-pair instances.
    Transform {
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Masked-LM / next-sentence pretraining of an encoder.
    Pretrain {
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Train one model (pair classifier or single-sentence suite).
    Train {
        #[arg(long, value_parser = approach_parser())]
        approach: Option<Approach>,
        /// Encoder or model checkpoint to start from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Learning-rate x batch-size grid search.
    Grid {
        #[arg(long, value_parser = approach_parser())]
        approach: Option<Approach>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset, or compare finished runs.
    Eval {
        /// Model or suite checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output directories of earlier `train` runs to compare.
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Run the full approach x strategy comparison on synthetic data.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli.common, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
