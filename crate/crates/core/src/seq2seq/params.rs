//! Flat parameter storage with a named-tensor layout.
//!
//! All tensors live in one contiguous `Vec<f64>`; the layout maps each
//! named tensor to a slice. Gradients and Adam moments reuse the same
//! layout, so optimizers and checkpointing work on plain slices.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};

pub const INIT_RANGE: f64 = 0.08;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// One LSTM layer: `weight` is `(input + hidden) × 4·hidden` with gate
/// blocks ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmSlots {
    pub input_dim: usize,
    pub weight: Slot,
    pub bias: Slot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionSlots {
    /// Decoder-state projection, `hidden × hidden`.
    pub w_s: Slot,
    /// Encoder-state projection, `hidden × hidden`.
    pub w_h: Slot,
    pub v: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub src_embed: Slot,
    pub tgt_embed: Slot,
    pub encoder: Vec<LstmSlots>,
    pub decoder: Vec<LstmSlots>,
    pub attention: Option<AttentionSlots>,
    pub out_weight: Slot,
    pub out_bias: Slot,
    pub total: usize,
    pub named: Vec<(String, Slot)>,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut named: Vec<(String, Slot)> = Vec::new();
        let mut offset = 0;
        let mut alloc = |name: String, rows: usize, cols: usize| {
            let slot = Slot { offset, rows, cols };
            offset += rows * cols;
            named.push((name, slot));
            slot
        };
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let src_embed = alloc("src_embed".into(), config.src_vocab_size, e);
        let tgt_embed = alloc("tgt_embed".into(), config.tgt_vocab_size, e);
        let mut lstm = |prefix: &str, layers: usize, first_in: usize| -> Vec<LstmSlots> {
            (0..layers)
                .map(|l| {
                    let input_dim = if l == 0 { first_in } else { h };
                    LstmSlots {
                        input_dim,
                        weight: alloc(format!("{prefix}.{l}.weight"), input_dim + h, 4 * h),
                        bias: alloc(format!("{prefix}.{l}.bias"), 1, 4 * h),
                    }
                })
                .collect()
        };
        let encoder = lstm("encoder", config.encoder_layers, e);
        let decoder = lstm("decoder", config.decoder_layers, config.decoder_input_dim());
        let attention = config.use_attention.then(|| AttentionSlots {
            w_s: alloc("attention.w_s".into(), h, h),
            w_h: alloc("attention.w_h".into(), h, h),
            v: alloc("attention.v".into(), 1, h),
        });
        let out_weight = alloc("output.weight".into(), h, config.tgt_vocab_size);
        let out_bias = alloc("output.bias".into(), 1, config.tgt_vocab_size);
        Ok(Layout {
            src_embed,
            tgt_embed,
            encoder,
            decoder,
            attention,
            out_weight,
            out_bias,
            total: offset,
            named,
        })
    }

    pub fn slot(&self, name: &str) -> Option<Slot> {
        self.named.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    /// Name of the tensor that owns flat coordinate `i`.
    pub fn tensor_of(&self, i: usize) -> Option<&str> {
        self.named
            .iter()
            .find(|(_, s)| s.range().contains(&i))
            .map(|(n, _)| n.as_str())
    }
}

/// Model weights (or a same-shaped gradient / moment buffer).
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub layout: Arc<Layout>,
    pub data: Vec<f64>,
}

impl Parameters {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let layout = Arc::new(Layout::new(config)?);
        Ok(Parameters {
            config: config.clone(),
            data: vec![0.0; layout.total],
            layout,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Parameters {
            config: self.config.clone(),
            layout: Arc::clone(&self.layout),
            data: vec![0.0; self.data.len()],
        }
    }

    /// Uniform in `[-0.08, 0.08]` from a seeded ChaCha stream, forget-gate
    /// biases set to 1.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for x in params.data.iter_mut() {
            *x = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
        let h = config.hidden_dim;
        let layout = Arc::clone(&params.layout);
        for layer in layout.encoder.iter().chain(&layout.decoder) {
            let b = layer.bias.offset;
            params.data[b + h..b + 2 * h].fill(FORGET_BIAS);
        }
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, slot: Slot) -> &[f64] {
        &self.data[slot.range()]
    }

    pub fn get_mut(&mut self, slot: Slot) -> &mut [f64] {
        &mut self.data[slot.range()]
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.slot(name).map(|s| self.get(s))
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        self.layout == other.layout
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// First tensor holding a non-finite value, if any.
    pub fn check_finite(&self) -> Result<()> {
        for (name, slot) in &self.layout.named {
            if self.get(*slot).iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalInstability {
                    tensor: name.clone(),
                });
            }
        }
        Ok(())
    }
}
