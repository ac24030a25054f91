//! Experiment orchestration: corpus preparation, scorer pre-training,
//! scoring, ordering, training per strategy and reporting.

pub mod report;
pub mod spec;
pub mod toy;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use report::{ExperimentReport, ReportFormat, ReportRow};
pub use spec::{CorpusSource, ExperimentSpec, FilePair, Widths};
pub use toy::{generate_toy_corpus, inject_label_noise, ToySpec, ToySplits, ToyTask};

use crate::corpus::{
    build_vocab, encode_corpus, filter_corpus, load_parallel_corpus, EncodedPair, ParallelCorpus, Side, VocabPair,
    Vocabulary,
};
use crate::error::{Error, Result};
use crate::eval::evaluate_model;
use crate::fingerprint::Fingerprint;
use crate::metrics::{score_corpus, MetricKind, ScoreTable};
use crate::ordering::{make_ordering, verify_plan, Strategy};
use crate::seq2seq::{Parameters, Preset};
use crate::trainer::{fit, save_checkpoint, ModelCheckpoint};

/// Corpus splits with their vocabularies and encodings.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: ParallelCorpus,
    pub validation: ParallelCorpus,
    pub test: ParallelCorpus,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub train_ids: Vec<EncodedPair>,
    pub validation_ids: Vec<EncodedPair>,
    pub test_ids: Vec<EncodedPair>,
    /// Training indices whose targets were replaced by noise.
    pub noisy: Vec<usize>,
}

const SPLITS: [&str; 3] = ["train", "validation", "test"];

impl PreparedData {
    pub fn vocabs(&self) -> VocabPair {
        VocabPair::of(&self.src_vocab, &self.tgt_vocab)
    }

    /// Writes `{train,validation,test}.{src,tgt}` and `vocab.{src,tgt}`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, c) in SPLITS.iter().zip([&self.train, &self.validation, &self.test]) {
            c.save(&dir.join(format!("{name}.src")), &dir.join(format!("{name}.tgt")))?;
        }
        self.src_vocab.save(&dir.join("vocab.src"))?;
        self.tgt_vocab.save(&dir.join("vocab.tgt"))
    }

    /// Reads a directory written by [`PreparedData::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let split = |name: &str| load_parallel_corpus(&dir.join(format!("{name}.src")), &dir.join(format!("{name}.tgt")));
        let (train, validation, test) = (split(SPLITS[0])?, split(SPLITS[1])?, split(SPLITS[2])?);
        let src_vocab = Vocabulary::load(&dir.join("vocab.src"))?;
        let tgt_vocab = Vocabulary::load(&dir.join("vocab.tgt"))?;
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
}

pub fn prepare_data(spec: &ExperimentSpec) -> Result<PreparedData> {
    let (train, validation, test, noisy) = match &spec.corpus {
        CorpusSource::Toy {
            spec: toy,
            noise,
            noise_seed,
        } => {
            let splits = generate_toy_corpus(toy)?;
            let (train, noisy) = if *noise > 0.0 {
                inject_label_noise(&splits.train, toy, *noise, *noise_seed)?
            } else {
                (splits.train, Vec::new())
            };
            (train, splits.validation, splits.test, noisy)
        }
        CorpusSource::Files {
            train,
            validation,
            test,
            min_len,
            max_len,
            max_pairs,
        } => {
            let load = |p: &FilePair| load_parallel_corpus(&p.src, &p.tgt);
            let mut tr = filter_corpus(&load(train)?, *min_len, *max_len)?;
            if let Some(k) = max_pairs {
                tr = tr.truncate(*k);
            }
            (tr, load(validation)?, load(test)?, Vec::new())
        }
    };
    if validation.is_empty() || test.is_empty() {
        return Err(Error::EmptyCorpus("validation or test split"));
    }
    let src_vocab = build_vocab(&train, Side::Source, spec.min_count)?;
    let tgt_vocab = build_vocab(&train, Side::Target, spec.min_count)?;
    Ok(PreparedData {
        train_ids: encode_corpus(&train, &src_vocab, &tgt_vocab),
        validation_ids: encode_corpus(&validation, &src_vocab, &tgt_vocab),
        test_ids: encode_corpus(&test, &src_vocab, &tgt_vocab),
        train,
        validation,
        test,
        src_vocab,
        tgt_vocab,
        noisy,
    })
}

/// Initial parameters for `preset`, shared by every run of an experiment.
pub fn initial_parameters(spec: &ExperimentSpec, data: &PreparedData, preset: Preset) -> Result<Parameters> {
    let cfg = spec.model_config(preset, data.src_vocab.len(), data.tgt_vocab.len());
    Parameters::init(&cfg, spec.init_seed)
}

/// Trains `preset` on the training split with per-epoch reshuffling and
/// returns its best checkpoint.
pub fn pretrain_scorer(spec: &ExperimentSpec, data: &PreparedData, preset: Preset) -> Result<ModelCheckpoint> {
    let init = initial_parameters(spec, data, preset)?;
    let config = crate::trainer::TrainConfig {
        max_epochs: spec.scorer_max_epochs,
        ..spec.train.clone()
    };
    let plan = make_ordering(
        Strategy::ShuffleEveryEpoch,
        None,
        &data.train.indices(),
        config.max_epochs,
        spec.order_seed,
    )?;
    Ok(fit(init, &plan, &data.train_ids, &data.validation_ids, data.vocabs(), &config)?.best)
}

/// Where one experiment keeps its artifacts.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Result<Self> {
        for sub in ["data", "scorers", "scores", "plans", "models"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(Layout { root: root.to_path_buf() })
    }

    pub fn scorer(&self, preset: Preset) -> PathBuf {
        self.root.join("scorers").join(format!("{preset}.ckpt"))
    }

    pub fn scores(&self, kind: MetricKind, scorer: Option<Preset>) -> PathBuf {
        let name = match scorer {
            Some(p) => format!("{kind}-{p}.scores"),
            None => format!("{kind}.scores"),
        };
        self.root.join("scores").join(name)
    }

    pub fn plan(&self, row_id: &str) -> PathBuf {
        self.root.join("plans").join(format!("{row_id}.plan"))
    }

    pub fn model(&self, row_id: &str) -> PathBuf {
        self.root.join("models").join(format!("{row_id}.ckpt"))
    }

    pub fn report(&self, format: ReportFormat) -> PathBuf {
        self.root.join(match format {
            ReportFormat::Tsv => "report.tsv",
            ReportFormat::Markdown => "report.md",
        })
    }
}

/// Rows in report order: scorers outermost, unscored strategies once on
/// the first pass.
pub fn planned_rows(spec: &ExperimentSpec) -> Vec<(Strategy, Option<Preset>)> {
    let mut rows = Vec::new();
    let passes: Vec<Option<Preset>> = if spec.scorers.is_empty() {
        vec![None]
    } else {
        spec.scorers.iter().copied().map(Some).collect()
    };
    for (i, scorer) in passes.iter().enumerate() {
        for &s in &spec.strategies {
            if s.needs_scorer() {
                rows.push((s, *scorer));
            } else if i == 0 {
                rows.push((s, None));
            }
        }
    }
    rows
}

fn stage<T>(strategy: impl ToString, stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        strategy: strategy.to_string(),
        stage,
        source: Box::new(e),
    })
}

/// Runs every requested (strategy, scorer) row from the same initial
/// parameters and writes scores, plans, checkpoints and both report formats
/// under the spec's output directory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let layout = Layout::new(&spec.output)?;
    let data = prepare_data(spec)?;
    let vocabs = data.vocabs();
    data.save(&layout.root.join("data"))?;

    let mut meta: Vec<(String, String)> = vec![
        ("spec".into(), spec.fingerprint().to_string()),
        ("train_corpus".into(), data.train.content_fingerprint().to_string()),
        ("train_pairs".into(), data.train.len().to_string()),
        ("noisy_pairs".into(), data.noisy.len().to_string()),
        ("vocab.src".into(), data.src_vocab.fingerprint().to_string()),
        ("vocab.tgt".into(), data.tgt_vocab.fingerprint().to_string()),
        ("init_seed".into(), spec.init_seed.to_string()),
        ("order_seed".into(), spec.order_seed.to_string()),
        ("train_seed".into(), spec.train.seed.to_string()),
        (
            "epochs".into(),
            format!(
                "epoch with the best validation perplexity; training stops after {} epochs without improvement or at {}",
                spec.train.patience, spec.train.max_epochs
            ),
        ),
    ];

    let init = initial_parameters(spec, &data, spec.trainer)?;
    let init_fp = ModelCheckpoint::new(init.clone(), vocabs).fingerprint();
    meta.push(("trainer.config".into(), Fingerprint::of(init.config.to_text().as_bytes()).to_string()));
    meta.push(("trainer.init".into(), init_fp.to_string()));

    let rows = planned_rows(spec);
    let mut scorers: BTreeMap<Preset, ModelCheckpoint> = BTreeMap::new();
    for &(strategy, scorer) in &rows {
        if let Some(p) = scorer {
            if let std::collections::btree_map::Entry::Vacant(slot) = scorers.entry(p) {
                let ckpt = stage(strategy, "pretrain", pretrain_scorer(spec, &data, p))?;
                stage(strategy, "pretrain", save_checkpoint(&ckpt, &layout.scorer(p)))?;
                meta.push((format!("scorer.{p}"), ckpt.fingerprint().to_string()));
                slot.insert(ckpt);
            }
        }
    }

    let mut tables: BTreeMap<(String, Option<Preset>), ScoreTable> = BTreeMap::new();
    let mut report = ExperimentReport::default();
    for &(strategy, scorer) in &rows {
        let scores = match strategy.required_metric() {
            None => None,
            Some(kind) => {
                let key = (kind.to_string(), scorer);
                if !tables.contains_key(&key) {
                    let model = scorer.map(|p| &scorers[&p]);
                    let table = stage(strategy, "score", score_corpus(kind, data.train.pairs(), &data.train_ids, model))?;
                    stage(strategy, "score", table.save(&layout.scores(kind, scorer)))?;
                    tables.insert(key.clone(), table);
                }
                Some(&tables[&key])
            }
        };
        let row_id = match scorer {
            Some(p) => format!("{strategy}-{p}"),
            None => strategy.to_string(),
        };
        let indices = data.train.indices();
        let plan = stage(
            strategy,
            "order",
            make_ordering(strategy, scores, &indices, spec.train.max_epochs, spec.order_seed),
        )?;
        let check = verify_plan(&plan, &indices, scores);
        if let Some(v) = check.violation {
            return Err(Error::Stage {
                strategy: strategy.to_string(),
                stage: "order",
                source: Box::new(Error::Precondition(v)),
            });
        }
        stage(strategy, "order", plan.save(&layout.plan(&row_id)))?;

        let result = stage(
            strategy,
            "train",
            fit(init.clone(), &plan, &data.train_ids, &data.validation_ids, vocabs, &spec.train),
        )?;
        stage(strategy, "train", save_checkpoint(&result.best, &layout.model(&row_id)))?;
        let eval = stage(strategy, "evaluate", evaluate_model(&result.best, &data.test_ids, None))?;

        if let Some(t) = scores {
            meta.push((format!("row.{row_id}.scores"), Fingerprint::of(t.to_text().as_bytes()).to_string()));
        }
        meta.push((format!("row.{row_id}.plan"), Fingerprint::of(plan.to_text().as_bytes()).to_string()));
        meta.push((format!("row.{row_id}.checkpoint"), result.best.fingerprint().to_string()));
        report.rows.push(ReportRow {
            strategy,
            scorer,
            epochs: result.epochs_to_convergence,
            perplexity: eval.perplexity,
            bleu: eval.bleu,
        });
    }
    report.metadata = meta;
    report.emit(ReportFormat::Tsv, &layout.report(ReportFormat::Tsv))?;
    report.emit(ReportFormat::Markdown, &layout.report(ReportFormat::Markdown))?;
    Ok(report)
}

/// Mean test BLEU of Ascending-PPL versus shuffle-once across seeds, on a
/// corpus whose training targets carry label noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseComparison {
    pub seeds: Vec<u64>,
    pub ascending_ppl: Vec<f64>,
    pub shuffle_once: Vec<f64>,
    /// Per-seed report fingerprints, for provenance.
    pub reports: Vec<Fingerprint>,
}

impl NoiseComparison {
    pub fn mean_ascending_ppl(&self) -> f64 {
        mean(&self.ascending_ppl)
    }

    pub fn mean_shuffle_once(&self) -> f64 {
        mean(&self.shuffle_once)
    }

    /// Ascending-PPL minus shuffle-once mean test BLEU.
    pub fn delta(&self) -> f64 {
        self.mean_ascending_ppl() - self.mean_shuffle_once()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("seed\tppl-asc\tshuffle-once\treport\n");
        for (i, s) in self.seeds.iter().enumerate() {
            let _ = writeln!(out, "{s}\t{:?}\t{:?}\t{}", self.ascending_ppl[i], self.shuffle_once[i], self.reports[i]);
        }
        let _ = writeln!(
            out,
            "mean\t{:?}\t{:?}\ndelta\t{:?}",
            self.mean_ascending_ppl(),
            self.mean_shuffle_once(),
            self.delta()
        );
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Runs the scorer → score → order → train → evaluate pipeline once per
/// seed. Each seed varies initialisation, ordering and dropout; the corpus
/// stays fixed. Results land in `<output>/seed-<s>/` and
/// `<output>/noise-delta.tsv`.
pub fn compare_under_noise(base: &ExperimentSpec, seeds: &[u64]) -> Result<NoiseComparison> {
    if seeds.is_empty() {
        return Err(Error::Config("noise comparison needs at least one seed".into()));
    }
    let asc = Strategy::Perplexity(crate::ordering::Direction::Ascending);
    let mut cmp = NoiseComparison {
        seeds: seeds.to_vec(),
        ascending_ppl: Vec::new(),
        shuffle_once: Vec::new(),
        reports: Vec::new(),
    };
    for &seed in seeds {
        let spec = ExperimentSpec {
            strategies: vec![asc, Strategy::ShuffleOnce],
            scorers: vec![base.scorers.first().copied().unwrap_or(Preset::Small)],
            init_seed: seed,
            order_seed: seed.wrapping_add(1),
            train: crate::trainer::TrainConfig {
                seed: seed.wrapping_add(2),
                ..base.train.clone()
            },
            output: base.output.join(format!("seed-{seed}")),
            ..base.clone()
        };
        let report = run_experiment(&spec)?;
        let bleu = |s: Strategy| report.rows.iter().find(|r| r.strategy == s).map(|r| r.bleu).unwrap_or(f64::NAN);
        cmp.ascending_ppl.push(bleu(asc));
        cmp.shuffle_once.push(bleu(Strategy::ShuffleOnce));
        cmp.reports.push(Fingerprint::of(report.to_tsv().as_bytes()));
    }
    fs::create_dir_all(&base.output).map_err(|e| Error::io(&base.output, e))?;
    let path = base.output.join("noise-delta.tsv");
    fs::write(&path, cmp.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(cmp)
}
