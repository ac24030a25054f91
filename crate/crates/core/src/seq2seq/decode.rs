use super::batch::Batch;
use super::linalg::matmul_acc;
use super::lstm::step_forward;
use super::model::{attend, attention_keys, init_source_layer, run_encoder};
use super::params::Parameters;
use crate::corpus::{EncodedPair, VocabPair, BOS, EOS, NUM_SPECIALS, PAD};
use crate::fingerprint::Fingerprint;

/// Argmax over the target vocabulary, never choosing PAD or BOS; ties go to
/// the smallest id.
fn argmax_token(logits: &[f64]) -> usize {
    let mut best = EOS;
    for (id, &z) in logits.iter().enumerate().skip(EOS + 1) {
        if z > logits[best] {
            best = id;
        }
    }
    best
}

/// Greedy decoding of several sources at once, each with its own cap.
/// Rows are independent: a row's output does not depend on its batch-mates.
pub fn greedy_decode_batch(params: &Parameters, sources: &[&[usize]], max_lens: &[usize]) -> Vec<Vec<usize>> {
    assert_eq!(sources.len(), max_lens.len());
    let rows = sources.len();
    if rows == 0 {
        return Vec::new();
    }
    let cfg = &params.config;
    let layout = &params.layout;
    let (hidden, vocab, embed) = (cfg.hidden_dim, cfg.tgt_vocab_size, cfg.embed_dim);

    let dummy = Fingerprint([0; 32]);
    let pairs: Vec<EncodedPair> = sources
        .iter()
        .map(|s| EncodedPair {
            index: 0,
            src_ids: s.to_vec(),
            tgt_in_ids: vec![BOS],
            tgt_out_ids: vec![EOS],
            vocabs: VocabPair { src: dummy, tgt: dummy },
        })
        .collect();
    let batch = Batch::from_pairs(&pairs);
    let encoder = run_encoder(params, &batch, None);
    let keys = match &layout.attention {
        Some(slots) => attention_keys(params, slots, &encoder.outputs, rows),
        None => Vec::new(),
    };
    let mut state: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.decoder_layers)
        .map(|l| encoder.finals[init_source_layer(params, l)].clone())
        .collect();

    let mut outputs: Vec<Vec<usize>> = vec![Vec::new(); rows];
    let mut done: Vec<bool> = max_lens.iter().map(|&m| m == 0).collect();
    let mut prev = vec![BOS; rows];
    let tgt_embed = params.get(layout.tgt_embed);
    let limit = max_lens.iter().copied().max().unwrap_or(0);

    for _ in 0..limit {
        if done.iter().all(|&d| d) {
            break;
        }
        let in_dim = cfg.decoder_input_dim();
        let mut x = vec![0.0; rows * in_dim];
        for r in 0..rows {
            x[r * in_dim..r * in_dim + embed].copy_from_slice(&tgt_embed[prev[r] * embed..(prev[r] + 1) * embed]);
        }
        if let Some(slots) = &layout.attention {
            let top = &state[cfg.decoder_layers - 1].0;
            let (_, ctx) = attend(params, slots, top, &keys, &encoder.outputs, &batch.src_lengths);
            for r in 0..rows {
                x[r * in_dim + embed..(r + 1) * in_dim].copy_from_slice(&ctx[r * hidden..(r + 1) * hidden]);
            }
        }
        for (l, slots) in layout.decoder.iter().enumerate() {
            let (h, c) = std::mem::take(&mut state[l]);
            let (_, hn, cn) = step_forward(params, slots, x, h, c, None, rows);
            x = hn.clone();
            state[l] = (hn, cn);
        }
        let mut logits = Vec::with_capacity(rows * vocab);
        for _ in 0..rows {
            logits.extend_from_slice(params.get(layout.out_bias));
        }
        matmul_acc(&x, rows, hidden, params.get(layout.out_weight), vocab, &mut logits);
        for r in 0..rows {
            if done[r] {
                continue;
            }
            let tok = argmax_token(&logits[r * vocab..(r + 1) * vocab]);
            if tok == EOS {
                done[r] = true;
            } else {
                debug_assert!(tok != PAD && tok != BOS && tok < vocab.max(NUM_SPECIALS));
                outputs[r].push(tok);
                prev[r] = tok;
                if outputs[r].len() >= max_lens[r] {
                    done[r] = true;
                }
            }
        }
    }
    outputs
}

/// Greedy translation of one source sentence; EOS is not included.
pub fn greedy_decode(params: &Parameters, src_ids: &[usize], max_len: usize) -> Vec<usize> {
    greedy_decode_batch(params, &[src_ids], &[max_len]).remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_skips_pad_and_bos_and_prefers_small_ids() {
        assert_eq!(argmax_token(&[9.0, 9.0, 1.0, 2.0, 2.0]), 3);
        assert_eq!(argmax_token(&[0.0, 0.0, 5.0, 5.0]), EOS);
    }
}
