//! Per-pair difficulty scores: lengths, teacher-forced cross-entropy and
//! perplexity under a scorer model, and smoothed sentence BLEU of the
//! scorer's greedy translation.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{EncodedPair, SentencePair, Side, UNK};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::numfmt::sig9;
use crate::seq2seq::{forward_teacher_forced, greedy_decode_batch, Batch, Parameters};
use crate::trainer::ModelCheckpoint;

pub const BLEU_ORDER: usize = 4;
const SCORES_HEADER: &str = "CURRICULA-SCORES v1";
const SCORE_CHUNK: usize = 32;

/// Clipped n-gram matches and the candidate's n-gram total.
pub fn modified_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    if candidate.len() < n {
        return (0, 0);
    }
    let mut ref_counts: HashMap<&[T], usize> = HashMap::new();
    for g in reference.windows(n) {
        *ref_counts.entry(g).or_default() += 1;
    }
    let mut cand_counts: HashMap<&[T], usize> = HashMap::new();
    for g in candidate.windows(n) {
        *cand_counts.entry(g).or_default() += 1;
    }
    let matches = cand_counts
        .iter()
        .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len() + 1 - n)
}

/// `min(1, exp(1 - r/c))`.
pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len >= reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// Sentence-level BLEU-4 with add-one smoothing on the 2- to 4-gram
/// precisions. The unigram precision is not smoothed, so a candidate with no
/// word in common with the reference scores 0.
pub fn sentence_bleu<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Precondition("sentence_bleu: empty reference".into()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let (m1, t1) = modified_precision(candidate, reference, 1);
    if m1 == 0 {
        return Ok(0.0);
    }
    let mut log_sum = (m1 as f64 / t1 as f64).ln();
    for n in 2..=BLEU_ORDER {
        let (m, t) = modified_precision(candidate, reference, n);
        log_sum += ((m + 1) as f64 / (t + 1) as f64).ln();
    }
    let bp = brevity_penalty(candidate.len(), reference.len());
    Ok(bp * (log_sum / BLEU_ORDER as f64).exp())
}

pub fn pair_length(pair: &SentencePair, side: Side) -> usize {
    pair.tokens(side).len()
}

/// Default decode cap: `max(2 × source length, 80)`.
pub fn default_max_decode_len(src_len: usize) -> usize {
    (2 * src_len).max(80)
}

/// Token-weighted mean −log2 p over a set of pairs, dropout off. Pairs are
/// evaluated in fixed chunks so the result does not depend on thread count.
pub fn corpus_cross_entropy(params: &Parameters, pairs: &[EncodedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus("cross-entropy"));
    }
    let parts: Vec<Result<(f64, usize)>> = pairs
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| {
            let out = forward_teacher_forced(params, &Batch::from_pairs(chunk), None)?;
            let bits: f64 = out.log_probs.iter().flatten().map(|lp| -lp).sum();
            Ok((bits, out.token_count))
        })
        .collect();
    let (mut bits, mut tokens) = (0.0, 0usize);
    for p in parts {
        let (b, t) = p?;
        bits += b;
        tokens += t;
    }
    Ok(bits / tokens as f64)
}

/// Replaces unknown-word ids in a reference so they can never be matched.
pub fn reference_ids(pair: &EncodedPair) -> Vec<usize> {
    pair.tgt_ids()
        .iter()
        .enumerate()
        .map(|(i, &id)| if id == UNK { usize::MAX - i } else { id })
        .collect()
}

/// Mean −log2 p per target token (EOS included) under teacher forcing,
/// dropout off.
pub fn pair_cross_entropy(model: &ModelCheckpoint, pair: &EncodedPair) -> Result<f64> {
    model.check_vocabs(&pair.vocabs)?;
    let out = forward_teacher_forced(&model.params, &Batch::from_pairs([pair]), None)?;
    Ok(out.pair_losses[0])
}

pub fn pair_perplexity(model: &ModelCheckpoint, pair: &EncodedPair) -> Result<f64> {
    pair_cross_entropy(model, pair).map(f64::exp2)
}

pub fn pair_bleu(model: &ModelCheckpoint, pair: &EncodedPair, max_decode_len: usize) -> Result<f64> {
    model.check_vocabs(&pair.vocabs)?;
    let out = greedy_decode_batch(&model.params, &[&pair.src_ids], &[max_decode_len]);
    sentence_bleu(&out[0], &reference_ids(pair))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Length(Side),
    CrossEntropy,
    Perplexity,
    Bleu,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Length(Side::Source) => "length-source",
            MetricKind::Length(Side::Target) => "length-target",
            MetricKind::CrossEntropy => "cross-entropy",
            MetricKind::Perplexity => "perplexity",
            MetricKind::Bleu => "bleu",
        }
    }

    pub fn needs_model(self) -> bool {
        !matches!(self, MetricKind::Length(_))
    }

    fn check_value(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                MetricKind::Length(_) => v >= 0.0,
                MetricKind::CrossEntropy => v >= 0.0,
                MetricKind::Perplexity => v >= 1.0,
                MetricKind::Bleu => (0.0..=1.0).contains(&v),
            }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "length-source" => MetricKind::Length(Side::Source),
            "length-target" => MetricKind::Length(Side::Target),
            "cross-entropy" => MetricKind::CrossEntropy,
            "perplexity" | "ppl" => MetricKind::Perplexity,
            "bleu" => MetricKind::Bleu,
            other => return Err(Error::Config(format!("unknown metric '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub index: usize,
    pub value: f64,
}

/// One score per corpus pair, ascending by index, tagged with the scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    kind: MetricKind,
    scorer: Option<Fingerprint>,
    scores: Vec<PairScore>,
}

impl ScoreTable {
    pub fn new(kind: MetricKind, scorer: Option<Fingerprint>, mut scores: Vec<PairScore>) -> Result<Self> {
        scores.sort_by_key(|s| s.index);
        if let Some(w) = scores.windows(2).find(|w| w[0].index == w[1].index) {
            return Err(Error::Metric(format!("duplicate score for index {}", w[0].index)));
        }
        if let Some(bad) = scores.iter().find(|s| !kind.check_value(s.value)) {
            return Err(Error::Metric(format!(
                "{} value {} for index {} out of range",
                kind, bad.value, bad.index
            )));
        }
        if kind.needs_model() != scorer.is_some() {
            return Err(Error::Metric(format!("{kind} scores need a scorer fingerprint iff model-based")));
        }
        Ok(ScoreTable { kind, scorer, scores })
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn scorer(&self) -> Option<Fingerprint> {
        self.scorer
    }

    pub fn scores(&self) -> &[PairScore] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.scores
            .binary_search_by_key(&index, |s| s.index)
            .ok()
            .map(|i| self.scores[i].value)
    }

    pub fn to_text(&self) -> String {
        let scorer = self.scorer.map_or_else(|| "none".to_string(), |f| f.to_string());
        let mut out = format!("{SCORES_HEADER} {} {scorer}\n", self.kind);
        for s in &self.scores {
            let _ = writeln!(out, "{}\t{}", s.index, sig9(s.value));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let rest = header
            .strip_prefix(SCORES_HEADER)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::Format(format!("expected '{SCORES_HEADER}' header, found '{header}'")))?;
        let (kind, scorer) = rest
            .split_once(' ')
            .ok_or_else(|| Error::Format(format!("malformed score header '{header}'")))?;
        let kind: MetricKind = kind.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
        let scorer = match scorer {
            "none" => None,
            fp => Some(fp.parse()?),
        };
        let mut scores = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = || Error::Format(format!("score line {}: '{line}'", n + 2));
            let (i, v) = line.split_once('\t').ok_or_else(bad)?;
            scores.push(PairScore {
                index: i.parse().map_err(|_| bad())?,
                value: v.parse().map_err(|_| bad())?,
            });
        }
        Self::new(kind, scorer, scores)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Scores every pair of a corpus. `encoded` must hold the same pairs as
/// `pairs` in the same order; model-based metrics need `model`. Pairs are
/// scored in parallel chunks and reassembled by index.
pub fn score_corpus(
    kind: MetricKind,
    pairs: &[SentencePair],
    encoded: &[EncodedPair],
    model: Option<&ModelCheckpoint>,
) -> Result<ScoreTable> {
    let values: Vec<PairScore> = match kind {
        MetricKind::Length(side) => pairs
            .iter()
            .map(|p| PairScore {
                index: p.index,
                value: pair_length(p, side) as f64,
            })
            .collect(),
        _ => {
            let model = model.ok_or_else(|| Error::Metric(format!("{kind} scoring needs a scorer checkpoint")))?;
            if encoded.len() != pairs.len() {
                return Err(Error::Precondition("encoded pairs do not match corpus".into()));
            }
            for e in encoded {
                model.check_vocabs(&e.vocabs)?;
            }
            let chunks: Vec<Result<Vec<PairScore>>> = encoded
                .par_chunks(SCORE_CHUNK)
                .map(|chunk| score_chunk(kind, model, chunk))
                .collect();
            let mut out = Vec::with_capacity(encoded.len());
            for c in chunks {
                out.extend(c?);
            }
            out
        }
    };
    let scorer = kind.needs_model().then(|| model.map(ModelCheckpoint::fingerprint)).flatten();
    ScoreTable::new(kind, scorer, values)
}

fn score_chunk(kind: MetricKind, model: &ModelCheckpoint, chunk: &[EncodedPair]) -> Result<Vec<PairScore>> {
    let values: Vec<f64> = match kind {
        MetricKind::CrossEntropy | MetricKind::Perplexity => {
            let out = forward_teacher_forced(&model.params, &Batch::from_pairs(chunk), None)?;
            out.pair_losses
                .into_iter()
                .map(|h| if kind == MetricKind::Perplexity { h.exp2() } else { h })
                .collect()
        }
        MetricKind::Bleu => {
            let sources: Vec<&[usize]> = chunk.iter().map(|p| p.src_ids.as_slice()).collect();
            let caps: Vec<usize> = chunk.iter().map(|p| default_max_decode_len(p.src_ids.len())).collect();
            let decoded = greedy_decode_batch(&model.params, &sources, &caps);
            decoded
                .iter()
                .zip(chunk)
                .map(|(cand, p)| sentence_bleu(cand, &reference_ids(p)))
                .collect::<Result<_>>()?
        }
        MetricKind::Length(_) => unreachable!("length scores need no model"),
    };
    Ok(chunk
        .iter()
        .zip(values)
        .map(|(p, value)| PairScore { index: p.index, value })
        .collect())
}
