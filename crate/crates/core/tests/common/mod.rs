#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

use curricula::corpus::{encode_pair, EncodedPair, SentencePair, VocabPair, Vocabulary, BOS, EOS};
use curricula::seq2seq::{Batch, ModelConfig, Preset};
use curricula::Fingerprint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pairs with random ids in `4..vocab`, framed like `encode_pair` output.
pub fn random_pairs(n: usize, vocab: usize, max_len: usize, seed: u64) -> Vec<EncodedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fp = Fingerprint::of(b"test");
    (0..n)
        .map(|index| {
            let sl = rng.gen_range(1..=max_len);
            let tl = rng.gen_range(1..=max_len);
            let src: Vec<usize> = (0..sl).map(|_| rng.gen_range(4..vocab)).collect();
            let tgt: Vec<usize> = (0..tl).map(|_| rng.gen_range(4..vocab)).collect();
            let mut tgt_in = vec![BOS];
            tgt_in.extend(&tgt);
            let mut tgt_out = tgt;
            tgt_out.push(EOS);
            EncodedPair {
                index,
                src_ids: src,
                tgt_in_ids: tgt_in,
                tgt_out_ids: tgt_out,
                vocabs: VocabPair { src: fp, tgt: fp },
            }
        })
        .collect()
}

pub fn batch_of(pairs: &[EncodedPair]) -> Batch {
    Batch::from_pairs(pairs.iter())
}

/// Both preset layouts at gradient-check scale.
pub fn tiny_config(preset: Preset, vocab: usize) -> ModelConfig {
    preset.config(vocab, vocab).scaled(8, 8)
}

pub fn encode_with(pair: &SentencePair, src: &Vocabulary, tgt: &Vocabulary) -> EncodedPair {
    encode_pair(pair, src, tgt)
}
