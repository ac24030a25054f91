mod common;

use common::oracle::{brute_corpus_bleu, brute_counts, brute_sentence_bleu};
use common::{random_pairs, tiny_config};
use curricula::corpus::{EncodedPair, SentencePair, VocabPair, EOS, UNK};
use curricula::eval::corpus_bleu;
use curricula::metrics::{
    default_max_decode_len, modified_precision, pair_bleu, pair_cross_entropy, pair_perplexity, reference_ids,
    score_corpus, sentence_bleu, MetricKind,
};
use curricula::seq2seq::{greedy_decode, Parameters, Preset};
use curricula::trainer::ModelCheckpoint;
use curricula::{Error, Fingerprint};
use proptest::prelude::*;

fn seq(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 0..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sentence_bleu_matches_brute_force(cand in seq(12), refr in seq(12).prop_filter("non-empty", |r| !r.is_empty())) {
        for n in 1..=4 {
            prop_assert_eq!(modified_precision(&cand, &refr, n), brute_counts(&cand, &refr, n));
        }
        let got = sentence_bleu(&cand, &refr).unwrap();
        prop_assert_eq!(got.to_bits(), brute_sentence_bleu(&cand, &refr).to_bits());
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn corpus_bleu_matches_brute_force(pairs in prop::collection::vec((seq(12), seq(12).prop_filter("non-empty", |r| !r.is_empty())), 1..=20)) {
        let (cands, refs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let got = corpus_bleu(&cands, &refs).unwrap();
        prop_assert_eq!(got.to_bits(), brute_corpus_bleu(&cands, &refs).to_bits());
    }

    #[test]
    fn self_bleu_is_one(x in seq(12).prop_filter("non-empty", |r| !r.is_empty())) {
        prop_assert_eq!(sentence_bleu(&x, &x).unwrap(), 1.0);
    }
}

#[test]
fn clipped_unigram_example() {
    let c: Vec<&str> = "the the the the the the the".split(' ').collect();
    let r: Vec<&str> = "the cat is on the mat".split(' ').collect();
    assert_eq!(modified_precision(&c, &r, 1), (2, 7));
    let as_bytes = |v: &[&str]| -> Vec<u8> { v.iter().map(|w| if *w == "the" { 0 } else { w.len() as u8 + w.as_bytes()[0] }).collect() };
    let expected = brute_sentence_bleu(&as_bytes(&c), &as_bytes(&r));
    assert_eq!(sentence_bleu(&c, &r).unwrap(), expected);
}

#[test]
fn aggregation_differs_from_mean_of_sentences() {
    let cands = vec![vec![0u8, 1, 2, 3, 4], vec![0, 1, 2]];
    let refs = vec![vec![0u8, 1, 2, 3, 4], vec![0, 1, 3, 2]];
    let corpus = corpus_bleu(&cands, &refs).unwrap();
    let mean = (sentence_bleu(&cands[0], &refs[0]).unwrap() + sentence_bleu(&cands[1], &refs[1]).unwrap()) / 2.0;
    assert_eq!(corpus, brute_corpus_bleu(&cands, &refs));
    assert!((corpus - mean).abs() > 1e-3);
    assert_eq!(corpus_bleu(&[vec![0u8, 1, 2]], &[vec![0u8, 1, 2, 3]]).unwrap(), 0.0);
}

fn fp() -> Fingerprint {
    Fingerprint::of(b"test")
}

fn checkpoint(params: Parameters) -> ModelCheckpoint {
    ModelCheckpoint::new(params, VocabPair { src: fp(), tgt: fp() })
}

/// A base-layout model with a zero output layer: uniform over the target
/// vocabulary at every position.
fn uniform_model(tgt_vocab: usize) -> ModelCheckpoint {
    let cfg = Preset::Base.config(12, tgt_vocab).scaled(4, 4);
    let mut p = Parameters::init(&cfg, 1).unwrap();
    let (w, b) = (p.layout.out_weight, p.layout.out_bias);
    p.get_mut(w).fill(0.0);
    p.get_mut(b).fill(0.0);
    checkpoint(p)
}

fn pair_with_target(tgt: &[usize]) -> EncodedPair {
    let mut p = random_pairs(1, 12, 4, 0).remove(0);
    p.tgt_in_ids = [&[curricula::corpus::BOS][..], tgt].concat();
    p.tgt_out_ids = [tgt, &[EOS]].concat();
    p
}

#[test]
fn uniform_over_four_is_two_bits() {
    let m = uniform_model(4);
    let pair = pair_with_target(&[UNK, UNK]);
    let h = pair_cross_entropy(&m, &pair).unwrap();
    assert!((h - 2.0).abs() < 1e-12, "{h}");
    // Direct product of the three token probabilities.
    let product: f64 = [0.25f64; 3].iter().product();
    let ppl_oracle = product.powf(-1.0 / 3.0);
    assert!((pair_perplexity(&m, &pair).unwrap() - ppl_oracle).abs() < 1e-12);
    assert_eq!(pair_cross_entropy(&m, &pair).unwrap().to_bits(), h.to_bits());
}

#[test]
fn perplexity_is_exp2_of_cross_entropy() {
    for case in 0..100u64 {
        let preset = if case % 2 == 0 { Preset::Base } else { Preset::Small };
        let m = checkpoint(Parameters::init(&tiny_config(preset, 12), case).unwrap());
        let pair = random_pairs(1, 12, 8, case + 1000).remove(0);
        let h = pair_cross_entropy(&m, &pair).unwrap();
        let ppl = pair_perplexity(&m, &pair).unwrap();
        let ulps = (ppl.to_bits() as i64 - h.exp2().to_bits() as i64).abs();
        assert!(ulps <= 1, "case {case}: {ulps} ulp");
        assert!(ppl >= 1.0);
    }
}

#[test]
fn vocabulary_mismatch_is_fingerprint_error() {
    let m = uniform_model(12);
    let mut pair = random_pairs(1, 12, 4, 0).remove(0);
    pair.vocabs.tgt = Fingerprint::of(b"other");
    assert!(matches!(pair_cross_entropy(&m, &pair), Err(Error::Fingerprint(_))));
    assert!(matches!(pair_bleu(&m, &pair, 10), Err(Error::Fingerprint(_))));
}

fn rigged(winner: usize) -> ModelCheckpoint {
    let mut m = uniform_model(12);
    let b = m.params.layout.out_bias;
    m.params.get_mut(b)[winner] = 50.0;
    m
}

#[test]
fn pair_bleu_edge_models() {
    let pair = pair_with_target(&[7, 7, 7, 7, 7]);
    assert_eq!(pair_bleu(&rigged(7), &pair, 5).unwrap(), 1.0);
    assert_eq!(pair_bleu(&rigged(EOS), &pair, 5).unwrap(), 0.0);
}

#[test]
fn pair_bleu_composes_decode_and_sentence_bleu() {
    for seed in 0..5 {
        let mut p = Parameters::init(&tiny_config(Preset::Base, 12), seed).unwrap();
        for x in p.data.iter_mut() {
            *x *= 15.0;
        }
        let m = checkpoint(p);
        let pair = random_pairs(1, 12, 6, seed).remove(0);
        let cap = default_max_decode_len(pair.src_ids.len());
        let decoded = greedy_decode(&m.params, &pair.src_ids, cap);
        let expected = sentence_bleu(&decoded, &reference_ids(&pair)).unwrap();
        assert_eq!(pair_bleu(&m, &pair, cap).unwrap(), expected);
    }
}

#[test]
fn unknown_reference_tokens_never_match() {
    let pair = pair_with_target(&[UNK, 5]);
    assert_eq!(reference_ids(&pair), vec![usize::MAX, 5]);
    assert_eq!(default_max_decode_len(10), 80);
    assert_eq!(default_max_decode_len(50), 100);
}

#[test]
fn corpus_scoring_is_ordered_and_read_only() {
    let m = checkpoint(Parameters::init(&tiny_config(Preset::Small, 12), 4).unwrap());
    let before = m.fingerprint();
    let encoded = random_pairs(70, 12, 6, 5);
    let pairs: Vec<SentencePair> = encoded
        .iter()
        .map(|e| SentencePair {
            index: e.index,
            src_tokens: e.src_ids.iter().map(|i| i.to_string()).collect(),
            tgt_tokens: e.tgt_out_ids[..e.tgt_out_ids.len() - 1].iter().map(|i| i.to_string()).collect(),
        })
        .collect();
    for kind in [MetricKind::Perplexity, MetricKind::CrossEntropy, MetricKind::Bleu] {
        let table = score_corpus(kind, &pairs, &encoded, Some(&m)).unwrap();
        assert_eq!(table.scorer(), Some(before));
        assert_eq!(table.len(), 70);
        for (s, e) in table.scores().iter().zip(&encoded) {
            assert_eq!(s.index, e.index);
            let single = match kind {
                MetricKind::Perplexity => pair_perplexity(&m, e).unwrap(),
                MetricKind::CrossEntropy => pair_cross_entropy(&m, e).unwrap(),
                _ => pair_bleu(&m, e, default_max_decode_len(e.src_ids.len())).unwrap(),
            };
            assert_eq!(s.value.to_bits(), single.to_bits(), "{kind} {}", e.index);
        }
    }
    assert_eq!(m.fingerprint(), before);
    let lengths = score_corpus(MetricKind::Length(curricula::corpus::Side::Target), &pairs, &[], None).unwrap();
    assert_eq!(lengths.scorer(), None);
    assert_eq!(lengths.get(3), Some(pairs[3].tgt_tokens.len() as f64));
    assert!(matches!(score_corpus(MetricKind::Bleu, &pairs, &encoded, None), Err(Error::Metric(_))));
}
