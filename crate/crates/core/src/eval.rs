//! Test-set evaluation: perplexity under teacher forcing and corpus BLEU of
//! greedy translations.

use std::fmt;

use rayon::prelude::*;

use crate::corpus::EncodedPair;
use crate::error::{Error, Result};
use crate::metrics::{brevity_penalty, corpus_cross_entropy, default_max_decode_len, modified_precision, reference_ids, BLEU_ORDER};
use crate::numfmt::sig9;
use crate::seq2seq::greedy_decode_batch;
use crate::trainer::ModelCheckpoint;

const DECODE_CHUNK: usize = 32;

/// Unsmoothed corpus BLEU-4: clipped n-gram counts and lengths are summed
/// over all pairs before the geometric mean and brevity penalty.
pub fn corpus_bleu<T: Eq + std::hash::Hash>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Pairing {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let mut matches = [0usize; BLEU_ORDER];
    let mut totals = [0usize; BLEU_ORDER];
    let (mut c_len, mut r_len) = (0, 0);
    for (c, r) in candidates.iter().zip(references) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=BLEU_ORDER {
            let (m, t) = modified_precision(c, r, n);
            matches[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    if c_len == 0 || matches.contains(&0) {
        return Ok(0.0);
    }
    let log_mean = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / BLEU_ORDER as f64;
    Ok(brevity_penalty(c_len, r_len) * log_mean.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub perplexity: f64,
    pub bleu: f64,
    pub pairs: usize,
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ppl={} bleu={} pairs={}", sig9(self.perplexity), sig9(self.bleu), self.pairs)
    }
}

/// Perplexity and corpus BLEU on a held-out set. `max_decode_len` caps the
/// translation length; `None` uses the per-source default.
pub fn evaluate_model(model: &ModelCheckpoint, test: &[EncodedPair], max_decode_len: Option<usize>) -> Result<EvalResult> {
    if test.is_empty() {
        return Err(Error::EmptyCorpus("test set"));
    }
    for p in test {
        model.check_vocabs(&p.vocabs)?;
    }
    let perplexity = corpus_cross_entropy(&model.params, test)?.exp2();
    let candidates: Vec<Vec<usize>> = test
        .par_chunks(DECODE_CHUNK)
        .flat_map_iter(|chunk| {
            let sources: Vec<&[usize]> = chunk.iter().map(|p| p.src_ids.as_slice()).collect();
            let caps: Vec<usize> = chunk
                .iter()
                .map(|p| max_decode_len.unwrap_or_else(|| default_max_decode_len(p.src_ids.len())))
                .collect();
            greedy_decode_batch(&model.params, &sources, &caps)
        })
        .collect();
    let references: Vec<Vec<usize>> = test.iter().map(reference_ids).collect();
    Ok(EvalResult {
        perplexity,
        bleu: corpus_bleu(&candidates, &references)?,
        pairs: test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_corpus_scores_one() {
        let c = vec![toks("a b c d e"), toks("f g h i")];
        assert!((corpus_bleu(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn counts_are_pooled_before_the_mean() {
        // The second pair has no 4-gram match on its own, but the corpus does.
        let c = vec![toks("a b c d e"), toks("x y z w")];
        let r = vec![toks("a b c d e"), toks("x y q w")];
        let b = corpus_bleu(&c, &r).unwrap();
        let p = [8.0 / 9.0, 5.0 / 7.0, 3.0 / 5.0, 2.0 / 3.0];
        let expected = (p.iter().map(|x: &f64| x.ln()).sum::<f64>() / 4.0).exp();
        assert!((b - expected).abs() < 1e-12, "{b} vs {expected}");
    }

    #[test]
    fn mismatched_lengths_are_pairing_errors() {
        let c = vec![toks("a")];
        assert!(matches!(corpus_bleu(&c, &[]), Err(Error::Pairing { candidates: 1, references: 0 })));
    }

    #[test]
    fn display_format() {
        let r = EvalResult {
            perplexity: 14.6912,
            bleu: 0.198,
            pairs: 3,
        };
        assert_eq!(r.to_string(), "ppl=14.6912 bleu=0.198 pairs=3");
    }
}
