use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use curricula::corpus::{build_vocab, encode_corpus, filter_corpus, load_parallel_corpus, Side};
use curricula::eval::evaluate_model;
use curricula::harness::{
    compare_under_noise, generate_toy_corpus, inject_label_noise, run_experiment, ExperimentReport, ExperimentSpec,
    PreparedData, ReportFormat, ToySpec, ToyTask,
};
use curricula::metrics::{score_corpus, MetricKind, ScoreTable};
use curricula::ordering::{make_ordering, verify_plan, Direction, OrderingPlan, Strategy};
use curricula::seq2seq::{Parameters, Preset};
use curricula::trainer::{fit, load_checkpoint, save_checkpoint, FitResult, TrainConfig};
use curricula::{Error, Result};

/// Fixed training-data orderings for sequence-to-sequence translation.
#[derive(Parser)]
#[command(name = "curricula", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a data directory from files or a synthetic task.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train a scorer model with per-epoch reshuffling.
    Pretrain(PretrainArgs),
    /// Score every training pair.
    Score(ScoreArgs),
    /// Turn scores into a per-epoch ordering plan.
    Order(OrderArgs),
    /// Train a model along an ordering plan.
    Train(TrainArgs),
    /// Test-set perplexity and corpus BLEU of a checkpoint.
    Eval(EvalArgs),
    /// Run every strategy of a spec file and write the report.
    Experiment(ExperimentArgs),
    /// Re-render a TSV report.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Load, filter and deduplicate parallel text files.
    Files {
        #[arg(long)]
        train_src: PathBuf,
        #[arg(long)]
        train_tgt: PathBuf,
        #[arg(long)]
        validation_src: PathBuf,
        #[arg(long)]
        validation_tgt: PathBuf,
        #[arg(long)]
        test_src: PathBuf,
        #[arg(long)]
        test_tgt: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_len: usize,
        #[arg(long, default_value_t = 60)]
        max_len: usize,
        /// Keep the first K training pairs after filtering.
        #[arg(long)]
        max_pairs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic copy, reverse or digit-translation corpus.
    Toy {
        #[arg(long, default_value = "reverse")]
        task: ToyTask,
        #[arg(long, default_value_t = 2500)]
        size: usize,
        #[arg(long, default_value_t = 20)]
        vocab: usize,
        #[arg(long, default_value_t = 5)]
        min_len: usize,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of training targets to replace with random tokens.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelOpts {
    #[arg(long, default_value = "base")]
    preset: Preset,
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
}

impl ModelOpts {
    fn init(&self, data: &PreparedData) -> Result<Parameters> {
        let cfg = self.preset.config(data.src_vocab.len(), data.tgt_vocab.len());
        let (e, h) = (self.embed.unwrap_or(cfg.embed_dim), self.hidden.unwrap_or(cfg.hidden_dim));
        Parameters::init(&cfg.scaled(e, h), self.init_seed)
    }
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long, default_value_t = 1e-5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 40)]
    max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 5.0)]
    clip_norm: f64,
    /// Seeds the dropout masks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainOpts {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            clip_norm: self.clip_norm,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long, default_value_t = 0)]
    order_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    data: PathBuf,
    /// length, length-source, length-target, ppl, cross-entropy or bleu.
    #[arg(long)]
    metric: String,
    /// Side measured by the plain `length` metric.
    #[arg(long, default_value = "source")]
    side: Side,
    /// Scorer checkpoint for model-based metrics.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OrderArgs {
    #[arg(long)]
    data: PathBuf,
    /// shuffle-every-epoch, shuffle-once, length-source, length-target, ppl or bleu.
    #[arg(long)]
    strategy: String,
    #[arg(long)]
    direction: Option<Direction>,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Fixed decode cap; default is max(2·source length, 80).
    #[arg(long)]
    max_decode_len: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Instead of the spec's rows, compare Ascending PPL with shuffle-once
    /// over these seeds, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    noise_seeds: Vec<u64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let text = s.to_string();
                if !msg.contains(&text) {
                    msg.push_str(&format!(": {text}"));
                }
                src = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Corpus(c) => corpus(c),
        Command::Pretrain(a) => {
            let data = PreparedData::load(&a.data)?;
            let config = a.train.config();
            let plan = make_ordering(
                Strategy::ShuffleEveryEpoch,
                None,
                &data.train.indices(),
                config.max_epochs,
                a.order_seed,
            )?;
            let result = fit(a.model.init(&data)?, &plan, &data.train_ids, &data.validation_ids, data.vocabs(), &config)?;
            finish_training(&result, &a.out)
        }
        Command::Score(a) => {
            let data = PreparedData::load(&a.data)?;
            let kind = match a.metric.as_str() {
                "length" => MetricKind::Length(a.side),
                m => m.parse()?,
            };
            let model = a.model.as_deref().map(load_checkpoint).transpose()?;
            let table = score_corpus(kind, data.train.pairs(), &data.train_ids, model.as_ref())?;
            table.save(&a.out)?;
            println!("scored {} pairs by {kind} -> {}", table.len(), a.out.display());
            Ok(())
        }
        Command::Order(a) => {
            let data = PreparedData::load(&a.data)?;
            let strategy: Strategy = match (a.strategy.as_str(), a.direction) {
                ("shuffle-every-epoch" | "shuffle-once", _) => a.strategy.parse()?,
                (s, Some(d)) if !s.ends_with("-asc") && !s.ends_with("-desc") => {
                    format!("{s}-{}", if d == Direction::Ascending { "asc" } else { "desc" }).parse()?
                }
                (s, _) => s.parse()?,
            };
            let scores = a.scores.as_deref().map(ScoreTable::load).transpose()?;
            let indices = data.train.indices();
            let plan = make_ordering(strategy, scores.as_ref(), &indices, a.epochs, a.seed)?;
            let check = verify_plan(&plan, &indices, scores.as_ref());
            if let Some(v) = check.violation {
                return Err(Error::Precondition(v));
            }
            plan.save(&a.out)?;
            println!("{} over {} epochs -> {}", strategy.label(), a.epochs, a.out.display());
            Ok(())
        }
        Command::Train(a) => {
            let data = PreparedData::load(&a.data)?;
            let plan = OrderingPlan::load(&a.plan)?;
            let result = fit(
                a.model.init(&data)?,
                &plan,
                &data.train_ids,
                &data.validation_ids,
                data.vocabs(),
                &a.train.config(),
            )?;
            finish_training(&result, &a.out)
        }
        Command::Eval(a) => {
            let data = PreparedData::load(&a.data)?;
            let model = load_checkpoint(&a.model)?;
            let result = evaluate_model(&model, &data.test_ids, a.max_decode_len)?;
            println!("{result}");
            Ok(())
        }
        Command::Experiment(a) => {
            let spec = ExperimentSpec::load(&a.spec)?;
            if a.noise_seeds.is_empty() {
                let report = run_experiment(&spec)?;
                print!("{}", report.render(ReportFormat::Markdown)?);
            } else {
                let cmp = compare_under_noise(&spec, &a.noise_seeds)?;
                print!("{}", cmp.to_text());
            }
            Ok(())
        }
        Command::Report(a) => {
            let report = ExperimentReport::load(&a.input)?;
            match a.out {
                Some(path) => report.emit(a.format, &path),
                None => {
                    print!("{}", report.render(a.format)?);
                    Ok(())
                }
            }
        }
    }
}

fn corpus(c: CorpusCommand) -> Result<()> {
    let (data, out) = match c {
        CorpusCommand::Files {
            train_src,
            train_tgt,
            validation_src,
            validation_tgt,
            test_src,
            test_tgt,
            min_len,
            max_len,
            max_pairs,
            min_count,
            out,
        } => {
            let mut train = filter_corpus(&load_parallel_corpus(&train_src, &train_tgt)?, min_len, max_len)?;
            if let Some(k) = max_pairs {
                train = train.truncate(k);
            }
            let validation = load_parallel_corpus(&validation_src, &validation_tgt)?;
            let test = load_parallel_corpus(&test_src, &test_tgt)?;
            (assemble(train, validation, test, min_count)?, out)
        }
        CorpusCommand::Toy {
            task,
            size,
            vocab,
            min_len,
            max_len,
            seed,
            noise,
            noise_seed,
            out,
        } => {
            let spec = ToySpec {
                task,
                size,
                vocab,
                min_len,
                max_len,
                seed,
            };
            let splits = generate_toy_corpus(&spec)?;
            let train = if noise > 0.0 {
                inject_label_noise(&splits.train, &spec, noise, noise_seed)?.0
            } else {
                splits.train
            };
            (assemble(train, splits.validation, splits.test, 1)?, out)
        }
    };
    data.save(&out)?;
    println!(
        "train {} / validation {} / test {} pairs, vocab {}/{} -> {}",
        data.train.len(),
        data.validation.len(),
        data.test.len(),
        data.src_vocab.len(),
        data.tgt_vocab.len(),
        out.display()
    );
    Ok(())
}

fn assemble(
    train: curricula::corpus::ParallelCorpus,
    validation: curricula::corpus::ParallelCorpus,
    test: curricula::corpus::ParallelCorpus,
    min_count: u64,
) -> Result<PreparedData> {
    let src_vocab = build_vocab(&train, Side::Source, min_count)?;
    let tgt_vocab = build_vocab(&train, Side::Target, min_count)?;
    Ok(PreparedData {
        train_ids: encode_corpus(&train, &src_vocab, &tgt_vocab),
        validation_ids: encode_corpus(&validation, &src_vocab, &tgt_vocab),
        test_ids: encode_corpus(&test, &src_vocab, &tgt_vocab),
        train,
        validation,
        test,
        src_vocab,
        tgt_vocab,
        noisy: Vec::new(),
    })
}

fn finish_training(result: &FitResult, out: &Path) -> Result<()> {
    for s in &result.history {
        println!(
            "epoch {:>3}  train {:.4} bits/token  val ppl {:.4}  {:.1}s",
            s.epoch, s.train_loss, s.val_perplexity, s.seconds
        );
    }
    save_checkpoint(&result.best, out)?;
    println!(
        "best epoch {} -> {} ({})",
        result.epochs_to_convergence,
        out.display(),
        result.best.fingerprint().short()
    );
    Ok(())
}
