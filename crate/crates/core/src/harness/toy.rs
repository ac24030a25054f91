//! Synthetic parallel corpora for desk-scale experiments.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::corpus::{ParallelCorpus, SentencePair};
use crate::error::{Error, Result};

const NUMBER_WORDS: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyTask {
    Copy,
    Reverse,
    /// Each digit token becomes a fixed word token.
    DigitTranslation,
}

impl ToyTask {
    pub fn as_str(self) -> &'static str {
        match self {
            ToyTask::Copy => "copy",
            ToyTask::Reverse => "reverse",
            ToyTask::DigitTranslation => "digit-translation",
        }
    }

    /// Target sentence for a source sentence of digit tokens.
    pub fn target(self, src: &[usize]) -> Vec<String> {
        match self {
            ToyTask::Copy => src.iter().map(|d| d.to_string()).collect(),
            ToyTask::Reverse => src.iter().rev().map(|d| d.to_string()).collect(),
            ToyTask::DigitTranslation => src.iter().map(|&d| self.target_token(d)).collect(),
        }
    }

    fn target_token(self, d: usize) -> String {
        match self {
            ToyTask::DigitTranslation => NUMBER_WORDS.get(d).map_or_else(|| format!("n{d}"), |w| w.to_string()),
            _ => d.to_string(),
        }
    }
}

impl fmt::Display for ToyTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToyTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(ToyTask::Copy),
            "reverse" => Ok(ToyTask::Reverse),
            "digit-translation" => Ok(ToyTask::DigitTranslation),
            _ => Err(Error::Config(format!("unknown toy task '{s}' (copy, reverse, digit-translation)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub task: ToyTask,
    /// Total pairs across all three splits.
    pub size: usize,
    /// Number of distinct source tokens.
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 30 {
            return Err(Error::Config(format!("toy corpus size {} is below 30", self.size)));
        }
        if self.min_len < 1 || self.min_len > self.max_len || self.max_len > 60 {
            return Err(Error::Config(format!(
                "toy length range {}..={} must lie within 1..=60",
                self.min_len, self.max_len
            )));
        }
        if self.vocab < 1 {
            return Err(Error::Config("toy vocabulary must have at least one token".into()));
        }
        let distinct: u128 = (self.min_len..=self.max_len)
            .map(|l| (self.vocab as u128).saturating_pow(l as u32))
            .fold(0u128, u128::saturating_add);
        if distinct < self.size as u128 {
            return Err(Error::Config(format!(
                "only {distinct} distinct sources exist for {} requested pairs",
                self.size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySplits {
    pub train: ParallelCorpus,
    pub validation: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// Distinct random sources with their task targets, split 80/10/10.
pub fn generate_toy_corpus(spec: &ToySpec) -> Result<ToySplits> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut seen = HashSet::new();
    let mut sources = Vec::with_capacity(spec.size);
    while sources.len() < spec.size {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let src: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.vocab)).collect();
        if seen.insert(src.clone()) {
            sources.push(src);
        }
    }
    let n_train = spec.size * 8 / 10;
    let n_val = spec.size / 10;
    let split = |range: std::ops::Range<usize>| {
        let pairs = sources[range]
            .iter()
            .enumerate()
            .map(|(i, src)| {
                let s: Vec<String> = src.iter().map(|d| d.to_string()).collect();
                SentencePair::new(i, &s.join(" "), &spec.task.target(src).join(" "))
            })
            .collect();
        ParallelCorpus::new("src", "tgt", pairs)
    };
    Ok(ToySplits {
        train: split(0..n_train)?,
        validation: split(n_train..n_train + n_val)?,
        test: split(n_train + n_val..spec.size)?,
    })
}

/// Replaces the targets of `round(fraction · n)` pairs with random token
/// sequences of the same length. Returns the corpus and the noisy indices.
pub fn inject_label_noise(corpus: &ParallelCorpus, spec: &ToySpec, fraction: f64, seed: u64) -> Result<(ParallelCorpus, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("noise fraction {fraction} outside [0, 1]")));
    }
    let n = corpus.len();
    let count = (fraction * n as f64).round() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, n, count).into_iter().collect();
    chosen.sort_unstable();
    let mut pairs = corpus.pairs().to_vec();
    for &i in &chosen {
        let p = &mut pairs[i];
        p.tgt_tokens = (0..p.tgt_tokens.len())
            .map(|_| spec.task.target_token(rng.gen_range(0..spec.vocab)))
            .collect();
    }
    let noisy = chosen.iter().map(|&i| pairs[i].index).collect();
    Ok((ParallelCorpus::new(corpus.src_name.clone(), corpus.tgt_name.clone(), pairs)?, noisy))
}
