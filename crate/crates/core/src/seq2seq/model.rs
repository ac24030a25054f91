//! Teacher-forced forward pass, exact reverse-mode gradients and additive
//! attention.
//!
//! Activations are stored time-major: for every step a `rows × width`
//! row-major block. Losses are in bits (log base 2).

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batch::Batch;
use super::linalg::{dot, matmul_a_bt_acc, matmul_acc, matmul_at_b_acc};
use super::lstm::{step_backward, step_forward, StepCache};
use super::params::{AttentionSlots, Parameters};
use crate::error::{Error, Result};

/// Draws inverted-dropout masks in a fixed order from a seeded stream.
pub struct DropoutMasks {
    rng: ChaCha8Rng,
    p: f64,
}

impl DropoutMasks {
    pub fn new(seed: u64, p: f64) -> Self {
        DropoutMasks {
            rng: ChaCha8Rng::seed_from_u64(seed),
            p,
        }
    }

    fn draw(&mut self, len: usize) -> Vec<f64> {
        let scale = 1.0 / (1.0 - self.p);
        (0..len)
            .map(|_| if self.rng.gen::<f64>() < self.p { 0.0 } else { scale })
            .collect()
    }
}

fn apply_mask(h: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => h.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => h.to_vec(),
    }
}

fn gather_rows(table: &[f64], width: usize, ids: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut out = Vec::new();
    for id in ids {
        out.extend_from_slice(&table[id * width..(id + 1) * width]);
    }
    out
}

fn scatter_rows(table: &mut [f64], width: usize, ids: impl Iterator<Item = usize>, grads: &[f64]) {
    for (r, id) in ids.enumerate() {
        let row = &mut table[id * width..(id + 1) * width];
        for (d, g) in row.iter_mut().zip(&grads[r * width..(r + 1) * width]) {
            *d += g;
        }
    }
}

pub(crate) struct LayerTrace {
    pub steps: Vec<StepCache>,
    pub masks: Vec<Option<Vec<f64>>>,
}

/// Encoder activations for a batch.
pub(crate) struct EncoderPass {
    pub layers: Vec<LayerTrace>,
    /// Top-layer outputs (after dropout) per source position.
    pub outputs: Vec<Vec<f64>>,
    /// Final `(h, c)` per layer.
    pub finals: Vec<(Vec<f64>, Vec<f64>)>,
}

pub(crate) fn run_encoder(
    params: &Parameters,
    batch: &Batch,
    mut dropout: Option<&mut DropoutMasks>,
) -> EncoderPass {
    let cfg = &params.config;
    let (rows, hidden, width) = (batch.size(), cfg.hidden_dim, batch.src_width);
    let embed = params.get(params.layout.src_embed);
    let mut inputs: Vec<Vec<f64>> = (0..width)
        .map(|t| {
            gather_rows(
                embed,
                cfg.embed_dim,
                (0..rows).map(|b| batch.src[b * width + t]),
            )
        })
        .collect();
    let mut layers = Vec::with_capacity(cfg.encoder_layers);
    let mut finals = Vec::with_capacity(cfg.encoder_layers);
    for slots in &params.layout.encoder {
        let mut h = vec![0.0; rows * hidden];
        let mut c = vec![0.0; rows * hidden];
        let mut trace = LayerTrace {
            steps: Vec::with_capacity(width),
            masks: Vec::with_capacity(width),
        };
        let mut outputs = Vec::with_capacity(width);
        for (t, x) in inputs.into_iter().enumerate() {
            let active = (0..rows).map(|b| t < batch.src_lengths[b]).collect();
            let (cache, hn, cn) = step_forward(params, slots, x, h, c, Some(active), rows);
            let mask = dropout.as_deref_mut().map(|d| d.draw(rows * hidden));
            outputs.push(apply_mask(&hn, mask.as_ref()));
            trace.steps.push(cache);
            trace.masks.push(mask);
            h = hn;
            c = cn;
        }
        finals.push((h, c));
        layers.push(trace);
        inputs = outputs;
    }
    EncoderPass {
        layers,
        outputs: inputs,
        finals,
    }
}

/// Decoder layer `l` starts from encoder layer `min(l, encoder_layers - 1)`.
pub(crate) fn init_source_layer(params: &Parameters, decoder_layer: usize) -> usize {
    decoder_layer.min(params.config.encoder_layers - 1)
}

/// Projected encoder states `W_h · h_i`, one `rows × hidden` block per position.
pub(crate) fn attention_keys(params: &Parameters, slots: &AttentionSlots, enc: &[Vec<f64>], rows: usize) -> Vec<Vec<f64>> {
    let h = params.config.hidden_dim;
    enc.iter()
        .map(|states| {
            let mut k = vec![0.0; rows * h];
            matmul_acc(states, rows, h, params.get(slots.w_h), h, &mut k);
            k
        })
        .collect()
}

pub(crate) struct AttentionStep {
    /// `tanh(W_s s + W_h h_i)` per position, `rows × hidden` each.
    pub act: Vec<Vec<f64>>,
    /// `rows × width` weights; zero past each row's source length.
    pub alpha: Vec<f64>,
}

/// Scores `vᵀ tanh(W_s s + W_h h_i)`, masked softmax over each row's real
/// positions, and the context `Σ α_i h_i`.
pub(crate) fn attend(
    params: &Parameters,
    slots: &AttentionSlots,
    state: &[f64],
    keys: &[Vec<f64>],
    enc: &[Vec<f64>],
    src_lengths: &[usize],
) -> (AttentionStep, Vec<f64>) {
    let h = params.config.hidden_dim;
    let rows = src_lengths.len();
    let width = keys.len();
    let mut query = vec![0.0; rows * h];
    matmul_acc(state, rows, h, params.get(slots.w_s), h, &mut query);
    let v = params.get(slots.v);
    let mut act = Vec::with_capacity(width);
    let mut scores = vec![f64::NEG_INFINITY; rows * width];
    for (i, key) in keys.iter().enumerate() {
        let mut a = vec![0.0; rows * h];
        for r in 0..rows {
            if i >= src_lengths[r] {
                continue;
            }
            let ar = &mut a[r * h..(r + 1) * h];
            for j in 0..h {
                ar[j] = (query[r * h + j] + key[r * h + j]).tanh();
            }
            scores[r * width + i] = dot(ar, v);
        }
        act.push(a);
    }
    let mut alpha = vec![0.0; rows * width];
    let mut context = vec![0.0; rows * h];
    for r in 0..rows {
        let len = src_lengths[r].min(width);
        if len == 0 {
            continue;
        }
        let s = &scores[r * width..r * width + len];
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..len {
            let e = (s[i] - m).exp();
            alpha[r * width + i] = e;
            total += e;
        }
        for i in 0..len {
            alpha[r * width + i] /= total;
            let a = alpha[r * width + i];
            let ctx = &mut context[r * h..(r + 1) * h];
            for (cv, ev) in ctx.iter_mut().zip(&enc[i][r * h..(r + 1) * h]) {
                *cv += a * ev;
            }
        }
    }
    (AttentionStep { act, alpha }, context)
}

/// Attention weights for decoder states against encoder states.
///
/// `decoder_state` is `rows × hidden`; `encoder_states[i]` holds position
/// `i` for every row. Returns a `rows × positions` matrix.
pub fn attention_weights(
    params: &Parameters,
    decoder_state: &[f64],
    encoder_states: &[Vec<f64>],
    source_lengths: &[usize],
) -> Result<Vec<f64>> {
    let slots = params
        .layout
        .attention
        .as_ref()
        .ok_or(Error::Capability("attention is disabled in this model"))?;
    let rows = source_lengths.len();
    let h = params.config.hidden_dim;
    if decoder_state.len() != rows * h || encoder_states.iter().any(|e| e.len() != rows * h) {
        return Err(Error::Shape("attention inputs must be rows × hidden".into()));
    }
    let keys = attention_keys(params, slots, encoder_states, rows);
    let (step, _) = attend(params, slots, decoder_state, &keys, encoder_states, source_lengths);
    Ok(step.alpha)
}

struct DecoderStep {
    layers: Vec<StepCache>,
    masks: Vec<Option<Vec<f64>>>,
    attention: Option<AttentionStep>,
    top_output: Vec<f64>,
    probs: Vec<f64>,
}

/// Result of a teacher-forced pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Token-weighted mean negative log2-probability over the batch.
    pub mean_loss: f64,
    /// Per-pair mean over that pair's target positions.
    pub pair_losses: Vec<f64>,
    /// log2 p(reference token) for every real target position, per pair.
    pub log_probs: Vec<Vec<f64>>,
    pub token_count: usize,
}

struct Trace {
    encoder: EncoderPass,
    steps: Vec<DecoderStep>,
}

fn check_ids(batch: &Batch, params: &Parameters) -> Result<()> {
    let cfg = &params.config;
    let check = |ids: &[usize], size: usize| match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(Error::Encoding { id, size }),
        None => Ok(()),
    };
    check(&batch.src, cfg.src_vocab_size)?;
    check(&batch.tgt_in, cfg.tgt_vocab_size)?;
    check(&batch.tgt_out, cfg.tgt_vocab_size)
}

fn run(params: &Parameters, batch: &Batch, dropout_seed: Option<u64>) -> Result<(ForwardOutput, Trace)> {
    check_ids(batch, params)?;
    let cfg = &params.config;
    let layout = &params.layout;
    let (rows, hidden, vocab) = (batch.size(), cfg.hidden_dim, cfg.tgt_vocab_size);
    let mut dropout = match dropout_seed {
        Some(seed) if cfg.dropout_p > 0.0 => Some(DropoutMasks::new(seed, cfg.dropout_p)),
        _ => None,
    };

    let encoder = run_encoder(params, batch, dropout.as_mut());
    let keys = match &layout.attention {
        Some(slots) => attention_keys(params, slots, &encoder.outputs, rows),
        None => Vec::new(),
    };
    let mut state: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.decoder_layers)
        .map(|l| encoder.finals[init_source_layer(params, l)].clone())
        .collect();

    let width = batch.tgt_width;
    let tgt_embed = params.get(layout.tgt_embed);
    let out_w = params.get(layout.out_weight);
    let out_b = params.get(layout.out_bias);
    let mut steps = Vec::with_capacity(width);
    let mut token_loss = vec![0.0; rows * width];
    let mut log_probs: Vec<Vec<f64>> = vec![Vec::new(); rows];

    for t in 0..width {
        let emb = gather_rows(tgt_embed, cfg.embed_dim, (0..rows).map(|b| batch.tgt_in[b * width + t]));
        let (attention, mut x) = match &layout.attention {
            Some(slots) => {
                let top = &state[cfg.decoder_layers - 1].0;
                let (att, ctx) = attend(params, slots, top, &keys, &encoder.outputs, &batch.src_lengths);
                let in_dim = cfg.decoder_input_dim();
                let mut x = vec![0.0; rows * in_dim];
                for r in 0..rows {
                    x[r * in_dim..r * in_dim + cfg.embed_dim]
                        .copy_from_slice(&emb[r * cfg.embed_dim..(r + 1) * cfg.embed_dim]);
                    x[r * in_dim + cfg.embed_dim..(r + 1) * in_dim]
                        .copy_from_slice(&ctx[r * hidden..(r + 1) * hidden]);
                }
                (Some(att), x)
            }
            None => (None, emb),
        };
        let mut layer_caches = Vec::with_capacity(cfg.decoder_layers);
        let mut masks = Vec::with_capacity(cfg.decoder_layers);
        for (l, slots) in layout.decoder.iter().enumerate() {
            let (h, c) = std::mem::take(&mut state[l]);
            let (cache, hn, cn) = step_forward(params, slots, x, h, c, None, rows);
            let mask = dropout.as_mut().map(|d| d.draw(rows * hidden));
            x = apply_mask(&hn, mask.as_ref());
            layer_caches.push(cache);
            masks.push(mask);
            state[l] = (hn, cn);
        }
        let top_output = x;

        let mut logits = Vec::with_capacity(rows * vocab);
        for _ in 0..rows {
            logits.extend_from_slice(out_b);
        }
        matmul_acc(&top_output, rows, hidden, out_w, vocab, &mut logits);
        let mut probs = logits;
        for r in 0..rows {
            let row = &mut probs[r * vocab..(r + 1) * vocab];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            for z in row.iter_mut() {
                *z -= lse;
            }
            if t < batch.tgt_lengths[r] {
                let target = batch.tgt_out[r * width + t];
                let lp2 = row[target] / LN_2;
                token_loss[r * width + t] = -lp2;
                log_probs[r].push(lp2);
            }
            for z in row.iter_mut() {
                *z = z.exp();
            }
        }
        steps.push(DecoderStep {
            layers: layer_caches,
            masks,
            attention,
            top_output,
            probs,
        });
    }

    let token_count = batch.token_count();
    let mut pair_losses = Vec::with_capacity(rows);
    let mut total = 0.0;
    for r in 0..rows {
        let s: f64 = token_loss[r * width..r * width + batch.tgt_lengths[r]].iter().sum();
        total += s;
        pair_losses.push(if batch.tgt_lengths[r] == 0 { 0.0 } else { s / batch.tgt_lengths[r] as f64 });
    }
    let mean_loss = if token_count == 0 { 0.0 } else { total / token_count as f64 };
    let output = ForwardOutput {
        mean_loss,
        pair_losses,
        log_probs,
        token_count,
    };
    Ok((output, Trace { encoder, steps }))
}

/// Teacher-forced loss. Dropout is active iff `dropout_seed` is given.
pub fn forward_teacher_forced(params: &Parameters, batch: &Batch, dropout_seed: Option<u64>) -> Result<ForwardOutput> {
    run(params, batch, dropout_seed).map(|(out, _)| out)
}

/// Gradients of the token-weighted mean loss with respect to every
/// parameter, using the same dropout masks as the matching forward call.
pub fn backward_gradients(
    params: &Parameters,
    batch: &Batch,
    dropout_seed: Option<u64>,
) -> Result<(ForwardOutput, Parameters)> {
    let (output, trace) = run(params, batch, dropout_seed)?;
    let mut grads = params.zeros_like();
    if output.token_count > 0 {
        backward(params, batch, &trace, output.token_count, &mut grads);
    }
    grads.check_finite()?;
    Ok((output, grads))
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn masked(grad: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    apply_mask(grad, mask)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    params: &Parameters,
    grads: &mut Parameters,
    slots: &AttentionSlots,
    att: &AttentionStep,
    enc: &[Vec<f64>],
    src_lengths: &[usize],
    d_ctx: &[f64],
    d_enc_out: &mut [Vec<f64>],
    d_keys: &mut [Vec<f64>],
) -> Vec<f64> {
    let h = params.config.hidden_dim;
    let rows = src_lengths.len();
    let width = enc.len();
    let v = params.get(slots.v);
    let mut dv = vec![0.0; h];
    let mut d_query = vec![0.0; rows * h];
    for r in 0..rows {
        let len = src_lengths[r].min(width);
        let dc = &d_ctx[r * h..(r + 1) * h];
        let alpha = &att.alpha[r * width..r * width + len];
        let d_alpha: Vec<f64> = (0..len).map(|i| dot(dc, &enc[i][r * h..(r + 1) * h])).collect();
        let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        for i in 0..len {
            let de = alpha[i] * (d_alpha[i] - weighted);
            let u = &att.act[i][r * h..(r + 1) * h];
            let dk = &mut d_keys[i][r * h..(r + 1) * h];
            let dq = &mut d_query[r * h..(r + 1) * h];
            for j in 0..h {
                let dpre = de * v[j] * (1.0 - u[j] * u[j]);
                dq[j] += dpre;
                dk[j] += dpre;
                dv[j] += de * u[j];
            }
            for (d, c) in d_enc_out[i][r * h..(r + 1) * h].iter_mut().zip(dc) {
                *d += alpha[i] * c;
            }
        }
    }
    add_into(grads.get_mut(slots.v), &dv);
    d_query
}

fn backward(params: &Parameters, batch: &Batch, trace: &Trace, token_count: usize, grads: &mut Parameters) {
    let cfg = &params.config;
    let layout = &params.layout;
    let (rows, hidden, vocab, embed) = (batch.size(), cfg.hidden_dim, cfg.tgt_vocab_size, cfg.embed_dim);
    let width = batch.tgt_width;
    let src_width = batch.src_width;
    let scale = 1.0 / (token_count as f64 * LN_2);

    let mut dh_state = vec![vec![0.0; rows * hidden]; cfg.decoder_layers];
    let mut dc_state = vec![vec![0.0; rows * hidden]; cfg.decoder_layers];
    let mut d_enc_out = vec![vec![0.0; rows * hidden]; src_width];
    let mut d_keys = vec![vec![0.0; rows * hidden]; src_width];
    let top = cfg.decoder_layers - 1;

    for t in (0..width).rev() {
        let step = &trace.steps[t];
        let mut dlogits = step.probs.clone();
        for r in 0..rows {
            let row = &mut dlogits[r * vocab..(r + 1) * vocab];
            if t < batch.tgt_lengths[r] {
                row[batch.tgt_out[r * width + t]] -= 1.0;
                for v in row.iter_mut() {
                    *v *= scale;
                }
            } else {
                row.fill(0.0);
            }
        }
        matmul_at_b_acc(&step.top_output, rows, hidden, &dlogits, vocab, grads.get_mut(layout.out_weight));
        {
            let db = grads.get_mut(layout.out_bias);
            for r in 0..rows {
                add_into(db, &dlogits[r * vocab..(r + 1) * vocab]);
            }
        }
        let mut dy = vec![0.0; rows * hidden];
        matmul_a_bt_acc(&dlogits, rows, vocab, params.get(layout.out_weight), hidden, &mut dy);

        for l in (0..cfg.decoder_layers).rev() {
            let mut dh = masked(&dy, step.masks[l].as_ref());
            add_into(&mut dh, &dh_state[l]);
            let (dx, dh_prev, dc_prev) = step_backward(
                params,
                grads,
                &layout.decoder[l],
                &step.layers[l],
                &dh,
                &dc_state[l],
                rows,
            );
            dh_state[l] = dh_prev;
            dc_state[l] = dc_prev;
            dy = dx;
        }

        // dy now holds the gradient of the first decoder layer's input.
        let in_dim = cfg.decoder_input_dim();
        let mut d_emb = vec![0.0; rows * embed];
        for r in 0..rows {
            d_emb[r * embed..(r + 1) * embed].copy_from_slice(&dy[r * in_dim..r * in_dim + embed]);
        }
        scatter_rows(
            grads.get_mut(layout.tgt_embed),
            embed,
            (0..rows).map(|b| batch.tgt_in[b * width + t]),
            &d_emb,
        );

        if let (Some(slots), Some(att)) = (&layout.attention, &step.attention) {
            let mut d_ctx = vec![0.0; rows * hidden];
            for r in 0..rows {
                d_ctx[r * hidden..(r + 1) * hidden].copy_from_slice(&dy[r * in_dim + embed..(r + 1) * in_dim]);
            }
            let d_query = attention_backward(
                params,
                grads,
                slots,
                att,
                &trace.encoder.outputs,
                &batch.src_lengths,
                &d_ctx,
                &mut d_enc_out,
                &mut d_keys,
            );
            // The query was the top decoder state entering step t.
            let query_state = &step.layers[top].h_prev;
            matmul_at_b_acc(query_state, rows, hidden, &d_query, hidden, grads.get_mut(slots.w_s));
            matmul_a_bt_acc(&d_query, rows, hidden, params.get(slots.w_s), hidden, &mut dh_state[top]);
        }
    }

    if let Some(slots) = &layout.attention {
        for i in 0..src_width {
            matmul_at_b_acc(&trace.encoder.outputs[i], rows, hidden, &d_keys[i], hidden, grads.get_mut(slots.w_h));
            matmul_a_bt_acc(&d_keys[i], rows, hidden, params.get(slots.w_h), hidden, &mut d_enc_out[i]);
        }
    }

    let mut d_final_h = vec![vec![0.0; rows * hidden]; cfg.encoder_layers];
    let mut d_final_c = vec![vec![0.0; rows * hidden]; cfg.encoder_layers];
    for l in 0..cfg.decoder_layers {
        let src = init_source_layer(params, l);
        add_into(&mut d_final_h[src], &dh_state[l]);
        add_into(&mut d_final_c[src], &dc_state[l]);
    }

    let mut d_out = d_enc_out;
    for l in (0..cfg.encoder_layers).rev() {
        let trace_l = &trace.encoder.layers[l];
        let slots = &layout.encoder[l];
        let mut dh_next = std::mem::take(&mut d_final_h[l]);
        let mut dc_next = std::mem::take(&mut d_final_c[l]);
        let mut d_in = vec![Vec::new(); src_width];
        for t in (0..src_width).rev() {
            let mut dh = masked(&d_out[t], trace_l.masks[t].as_ref());
            add_into(&mut dh, &dh_next);
            let (dx, dh_prev, dc_prev) = step_backward(params, grads, slots, &trace_l.steps[t], &dh, &dc_next, rows);
            dh_next = dh_prev;
            dc_next = dc_prev;
            d_in[t] = dx;
        }
        if l == 0 {
            for (t, dx) in d_in.iter().enumerate() {
                scatter_rows(
                    grads.get_mut(layout.src_embed),
                    embed,
                    (0..rows).map(|b| batch.src[b * src_width + t]),
                    dx,
                );
            }
        }
        d_out = d_in;
    }
}
