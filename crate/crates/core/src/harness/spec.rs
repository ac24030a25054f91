//! Experiment description: a flat `key=value` file under a version header.
//!
//! ```text
//! CURRICULA-SPEC v1
//! corpus=toy
//! toy.task=reverse
//! strategies=shuffle-every-epoch,ppl-asc
//! scorers=small
//! trainer.preset=small
//! output=runs/demo
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::ordering::Strategy;
use crate::seq2seq::{ModelConfig, Preset};
use crate::trainer::TrainConfig;

use super::toy::{ToySpec, ToyTask};

pub const SPEC_HEADER: &str = "CURRICULA-SPEC v1";

#[derive(Debug, Clone, PartialEq)]
pub struct FilePair {
    pub src: PathBuf,
    pub tgt: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Toy {
        spec: ToySpec,
        /// Fraction of training targets replaced by random tokens.
        noise: f64,
        noise_seed: u64,
    },
    Files {
        train: FilePair,
        validation: FilePair,
        test: FilePair,
        min_len: usize,
        max_len: usize,
        /// Keep at most this many training pairs after filtering.
        max_pairs: Option<usize>,
    },
}

/// Optional width overrides for one preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Widths {
    pub embed: Option<usize>,
    pub hidden: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub corpus: CorpusSource,
    pub min_count: u64,
    pub strategies: Vec<Strategy>,
    /// Scorer presets; every scored strategy gets one row per scorer.
    pub scorers: Vec<Preset>,
    pub trainer: Preset,
    pub small_widths: Widths,
    pub base_widths: Widths,
    pub train: TrainConfig,
    /// Epoch cap when pre-training scorers.
    pub scorer_max_epochs: usize,
    pub init_seed: u64,
    pub order_seed: u64,
    pub output: PathBuf,
}

impl ExperimentSpec {
    /// A toy reverse-task experiment with the given strategies.
    pub fn toy(task: ToyTask, strategies: Vec<Strategy>, output: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            corpus: CorpusSource::Toy {
                spec: ToySpec {
                    task,
                    size: 500,
                    vocab: 10,
                    min_len: 5,
                    max_len: 10,
                    seed: 1,
                },
                noise: 0.0,
                noise_seed: 0,
            },
            min_count: 1,
            strategies,
            scorers: vec![Preset::Small],
            trainer: Preset::Small,
            small_widths: Widths::default(),
            base_widths: Widths::default(),
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 32,
                max_epochs: 10,
                ..TrainConfig::default()
            },
            scorer_max_epochs: 10,
            init_seed: 1,
            order_seed: 2,
            output: output.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("spec lists no strategies".into()));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return Err(Error::Config(format!("strategy {s} listed twice")));
            }
        }
        if self.strategies.iter().any(|s| s.needs_scorer()) && self.scorers.is_empty() {
            return Err(Error::Config("scored strategies need at least one scorer".into()));
        }
        for (i, s) in self.scorers.iter().enumerate() {
            if self.scorers[..i].contains(s) {
                return Err(Error::Config(format!("scorer {s} listed twice")));
            }
        }
        if self.scorer_max_epochs < 1 {
            return Err(Error::Config("scorer.max_epochs must be at least 1".into()));
        }
        match &self.corpus {
            CorpusSource::Toy { spec, noise, .. } => {
                spec.validate()?;
                if !(0.0..=1.0).contains(noise) {
                    return Err(Error::Config(format!("toy.noise {noise} outside [0, 1]")));
                }
            }
            CorpusSource::Files { min_len, max_len, .. } => {
                if *min_len < 1 || max_len < min_len {
                    return Err(Error::Config(format!("invalid length bounds [{min_len}, {max_len}]")));
                }
            }
        }
        self.train.validate()
    }

    pub fn widths(&self, preset: Preset) -> Widths {
        match preset {
            Preset::Small => self.small_widths,
            Preset::Base => self.base_widths,
        }
    }

    pub fn model_config(&self, preset: Preset, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        let cfg = preset.config(src_vocab, tgt_vocab);
        let w = self.widths(preset);
        let (e, h) = (w.embed.unwrap_or(cfg.embed_dim), w.hidden.unwrap_or(cfg.hidden_dim));
        cfg.scaled(e, h)
    }

    /// Canonical text; parsing it yields the same spec.
    pub fn to_text(&self) -> String {
        let mut out = String::from(SPEC_HEADER);
        out.push('\n');
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        match &self.corpus {
            CorpusSource::Toy { spec, noise, noise_seed } => {
                kv("corpus", "toy".into());
                kv("toy.task", spec.task.to_string());
                kv("toy.size", spec.size.to_string());
                kv("toy.vocab", spec.vocab.to_string());
                kv("toy.min_len", spec.min_len.to_string());
                kv("toy.max_len", spec.max_len.to_string());
                kv("toy.seed", spec.seed.to_string());
                kv("toy.noise", noise.to_string());
                kv("toy.noise_seed", noise_seed.to_string());
            }
            CorpusSource::Files {
                train,
                validation,
                test,
                min_len,
                max_len,
                max_pairs,
            } => {
                kv("corpus", "files".into());
                for (name, fp) in [("train", train), ("validation", validation), ("test", test)] {
                    kv(&format!("{name}.src"), fp.src.display().to_string());
                    kv(&format!("{name}.tgt"), fp.tgt.display().to_string());
                }
                kv("filter.min_len", min_len.to_string());
                kv("filter.max_len", max_len.to_string());
                if let Some(k) = max_pairs {
                    kv("filter.max_pairs", k.to_string());
                }
            }
        }
        kv("vocab.min_count", self.min_count.to_string());
        kv("strategies", join(&self.strategies));
        kv("scorers", join(&self.scorers));
        kv("trainer.preset", self.trainer.to_string());
        for (p, w) in [("small", self.small_widths), ("base", self.base_widths)] {
            if let Some(e) = w.embed {
                kv(&format!("model.{p}.embed"), e.to_string());
            }
            if let Some(h) = w.hidden {
                kv(&format!("model.{p}.hidden"), h.to_string());
            }
        }
        let t = &self.train;
        kv("train.learning_rate", t.learning_rate.to_string());
        kv("train.beta1", t.beta1.to_string());
        kv("train.beta2", t.beta2.to_string());
        kv("train.epsilon", t.epsilon.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.max_epochs", t.max_epochs.to_string());
        kv("train.patience", t.patience.to_string());
        kv("train.clip_norm", t.clip_norm.to_string());
        kv("train.seed", t.seed.to_string());
        kv("scorer.max_epochs", self.scorer_max_epochs.to_string());
        kv("init_seed", self.init_seed.to_string());
        kv("order_seed", self.order_seed.to_string());
        kv("output", self.output.display().to_string());
        out
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(self.to_text().as_bytes())
    }

    /// Parses spec text. Relative paths are resolved against `base_dir`.
    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some(SPEC_HEADER) => {}
            other => {
                return Err(Error::Config(format!("expected spec header '{SPEC_HEADER}', found {other:?}")));
            }
        }
        let mut kv = Keys::default();
        for (n, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("spec line {}: expected key=value", n + 2)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if kv.0.insert(k.clone(), (v, false)).is_some() {
                return Err(Error::Config(format!("spec key '{k}' given twice")));
            }
        }
        let path = |kv: &mut Keys, key: &str| -> Result<PathBuf> {
            let p = PathBuf::from(kv.required(key)?);
            Ok(if p.is_relative() { base_dir.join(p) } else { p })
        };

        let corpus = match kv.optional("corpus").unwrap_or_else(|| "toy".into()).as_str() {
            "toy" => CorpusSource::Toy {
                spec: ToySpec {
                    task: kv.parse_or("toy.task", ToyTask::Reverse)?,
                    size: kv.parse_or("toy.size", 500)?,
                    vocab: kv.parse_or("toy.vocab", 10)?,
                    min_len: kv.parse_or("toy.min_len", 5)?,
                    max_len: kv.parse_or("toy.max_len", 10)?,
                    seed: kv.parse_or("toy.seed", 1)?,
                },
                noise: kv.parse_or("toy.noise", 0.0)?,
                noise_seed: kv.parse_or("toy.noise_seed", 0)?,
            },
            "files" => {
                let mut pair = |name: &str| -> Result<FilePair> {
                    Ok(FilePair {
                        src: path(&mut kv, &format!("{name}.src"))?,
                        tgt: path(&mut kv, &format!("{name}.tgt"))?,
                    })
                };
                let (train, validation, test) = (pair("train")?, pair("validation")?, pair("test")?);
                CorpusSource::Files {
                    train,
                    validation,
                    test,
                    min_len: kv.parse_or("filter.min_len", 5)?,
                    max_len: kv.parse_or("filter.max_len", 60)?,
                    max_pairs: kv.optional("filter.max_pairs").map(|v| parse_value("filter.max_pairs", &v)).transpose()?,
                }
            }
            other => return Err(Error::Config(format!("corpus must be 'toy' or 'files', got '{other}'"))),
        };
        let strategies = kv
            .required("strategies")?
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<Strategy>>>()?;
        let scorers = match kv.optional("scorers") {
            Some(v) if v.is_empty() => Vec::new(),
            Some(v) => v.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<Preset>>>()?,
            None => vec![Preset::Small],
        };
        let widths = |kv: &mut Keys, p: &str| -> Result<Widths> {
            Ok(Widths {
                embed: kv.optional(&format!("model.{p}.embed")).map(|v| parse_value("model embed", &v)).transpose()?,
                hidden: kv.optional(&format!("model.{p}.hidden")).map(|v| parse_value("model hidden", &v)).transpose()?,
            })
        };
        let d = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: kv.parse_or("train.learning_rate", d.learning_rate)?,
            beta1: kv.parse_or("train.beta1", d.beta1)?,
            beta2: kv.parse_or("train.beta2", d.beta2)?,
            epsilon: kv.parse_or("train.epsilon", d.epsilon)?,
            batch_size: kv.parse_or("train.batch_size", d.batch_size)?,
            max_epochs: kv.parse_or("train.max_epochs", d.max_epochs)?,
            patience: kv.parse_or("train.patience", d.patience)?,
            clip_norm: kv.parse_or("train.clip_norm", d.clip_norm)?,
            seed: kv.parse_or("train.seed", d.seed)?,
        };
        let spec = ExperimentSpec {
            corpus,
            min_count: kv.parse_or("vocab.min_count", 1)?,
            strategies,
            scorers,
            trainer: kv.parse_or("trainer.preset", Preset::Base)?,
            small_widths: widths(&mut kv, "small")?,
            base_widths: widths(&mut kv, "base")?,
            scorer_max_epochs: kv.parse_or("scorer.max_epochs", train.max_epochs)?,
            train,
            init_seed: kv.parse_or("init_seed", 0)?,
            order_seed: kv.parse_or("order_seed", 0)?,
            output: path(&mut kv, "output")?,
        };
        if let Some(k) = kv.unused() {
            return Err(Error::Config(format!("unknown spec key '{k}'")));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base)
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("spec key '{key}': cannot parse '{v}'")))
}

/// Parsed key/value pairs with a used flag, so leftovers can be reported.
#[derive(Default)]
struct Keys(BTreeMap<String, (String, bool)>);

impl Keys {
    fn optional(&mut self, key: &str) -> Option<String> {
        self.0.get_mut(key).map(|(v, used)| {
            *used = true;
            v.clone()
        })
    }

    fn required(&mut self, key: &str) -> Result<String> {
        self.optional(key).ok_or_else(|| Error::Config(format!("spec is missing '{key}'")))
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.optional(key) {
            Some(v) => parse_value(key, &v),
            None => Ok(default),
        }
    }

    fn unused(&self) -> Option<&str> {
        self.0.iter().find(|(_, (_, used))| !used).map(|(k, _)| k.as_str())
    }
}
