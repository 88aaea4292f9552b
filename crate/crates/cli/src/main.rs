mod commands;
mod config;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use dsrl::Error;

#[derive(Parser)]
#[command(
    name = "dsrl",
    version,
    about = "Semantic-reward summarization training and scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Each maps onto a config key and wins over
/// the config file.
#[derive(Args, Clone)]
struct Common {
    /// `key = value` (or JSON) run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for initialization, batching and sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for every artifact the command writes.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Embedding provider: hash or file.
    #[arg(long)]
    provider: Option<String>,
    /// Hash provider vector width.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// N-gram size for repetition and novelty rates.
    #[arg(long)]
    ngram: Option<usize>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Default)]
struct TrainFlags {
    /// Directory holding preprocess output.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Optimizer steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Examples per step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Steps between dev evaluations and checkpoints.
    #[arg(long)]
    eval_interval: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary and encode the corpus.
    Preprocess {
        /// Training corpus (JSONL with article, summary and optional id).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Dev corpus; otherwise the tail of the input is held out.
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Test corpus to encode alongside.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Vocabulary size including the reserved ids.
        #[arg(long)]
        vocab_size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-entropy pretraining.
    Pretrain {
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Self-critical fine-tuning from a checkpoint.
    Finetune {
        /// Start checkpoint, usually `pretrained.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// rouge_xent, dsr_rouge, dsr_xent or dsr.
        #[arg(long)]
        objective: Option<String>,
        /// Mixing weight; dataset default when omitted.
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy-decode a test corpus and score it.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test corpus (JSONL with article and summary).
        #[arg(long)]
        test: Option<PathBuf>,
        /// Directory holding the vocabulary.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score candidates against references.
    Score {
        /// JSONL `{"id", "tokens"}` or one sequence per line.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
        /// Optional articles for the novelty rate.
        #[arg(long)]
        articles: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Keep negative cosine maxima.
        #[arg(long)]
        allow_negative_sim: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Repetition and novelty rates only.
    Analyze {
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        articles: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

type Overrides = Vec<(&'static str, String)>;

fn push<T: ToString>(o: &mut Overrides, key: &'static str, v: Option<T>) {
    if let Some(v) = v {
        o.push((key, v.to_string()));
    }
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

impl TrainFlags {
    fn overrides(self, o: &mut Overrides) {
        push(o, "data_dir", path_str(self.data_dir));
        push(o, "steps", self.steps);
        push(o, "batch_size", self.batch_size);
        push(o, "learning_rate", self.learning_rate);
        push(o, "eval_interval", self.eval_interval);
    }
}

fn resolve(common: Common, mut specific: Overrides) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    push(&mut specific, "seed", common.seed);
    push(&mut specific, "out_dir", path_str(common.out_dir));
    push(&mut specific, "provider", common.provider);
    push(&mut specific, "embed_dim", common.embed_dim);
    push(&mut specific, "ngram", common.ngram);
    for (k, v) in specific {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut o = Overrides::new();
    let (name, common): (&str, Common) = match cli.command {
        Command::Preprocess {
            input,
            dev,
            test,
            vocab_size,
            common,
        } => {
            push(&mut o, "input", path_str(input));
            push(&mut o, "dev", path_str(dev));
            push(&mut o, "test", path_str(test));
            push(&mut o, "vocab_size", vocab_size);
            ("preprocess", common)
        }
        Command::Pretrain { train, common } => {
            train.overrides(&mut o);
            ("pretrain", common)
        }
        Command::Finetune {
            checkpoint,
            objective,
            gamma,
            train,
            common,
        } => {
            push(&mut o, "checkpoint", path_str(checkpoint));
            push(&mut o, "objective", objective);
            push(&mut o, "gamma", gamma);
            train.overrides(&mut o);
            ("finetune", common)
        }
        Command::Evaluate {
            checkpoint,
            test,
            data_dir,
            output,
            common,
        } => {
            push(&mut o, "checkpoint", path_str(checkpoint));
            push(&mut o, "test", path_str(test));
            push(&mut o, "data_dir", path_str(data_dir));
            push(&mut o, "output", path_str(output));
            ("evaluate", common)
        }
        Command::Score {
            candidates,
            references,
            articles,
            output,
            allow_negative_sim,
            common,
        } => {
            push(&mut o, "candidates", path_str(candidates));
            push(&mut o, "references", path_str(references));
            push(&mut o, "articles", path_str(articles));
            push(&mut o, "output", path_str(output));
            if allow_negative_sim {
                o.push(("allow_negative_sim", "true".into()));
            }
            ("score", common)
        }
        Command::Analyze {
            candidates,
            articles,
            output,
            common,
        } => {
            push(&mut o, "candidates", path_str(candidates));
            push(&mut o, "articles", path_str(articles));
            push(&mut o, "output", path_str(output));
            ("analyze", common)
        }
    };
    let cfg = resolve(common, o)?;
    eprint!("# {name} config\n{cfg}");
    match name {
        "preprocess" => commands::preprocess(&cfg),
        "pretrain" => commands::pretrain(&cfg),
        "finetune" => commands::finetune(&cfg),
        "evaluate" => commands::evaluate(&cfg),
        "score" => commands::score(&cfg),
        "analyze" => commands::analyze(&cfg),
        _ => unreachable!(),
    }
}

/// 2 for bad input, 3 for numeric divergence, 4 for configuration or
/// checkpoint mismatches.
fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Divergence(_) => 3,
        Error::Config(_) | Error::ConfigMismatch(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
