use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub use_attention: bool,
    pub dropout_p: f64,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
}

/// The two architectures the experiments compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    /// 2×512 LSTM encoder and decoder with additive attention.
    Base,
    /// 1×128 LSTM encoder, 2×128 decoder, no attention.
    Small,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Base => "base",
            Preset::Small => "small",
        }
    }

    pub fn config(self, src_vocab_size: usize, tgt_vocab_size: usize) -> ModelConfig {
        let (dim, encoder_layers, use_attention) = match self {
            Preset::Base => (512, 2, true),
            Preset::Small => (128, 1, false),
        };
        ModelConfig {
            embed_dim: dim,
            hidden_dim: dim,
            encoder_layers,
            decoder_layers: 2,
            use_attention,
            dropout_p: 0.2,
            src_vocab_size,
            tgt_vocab_size,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Preset::Base),
            "small" => Ok(Preset::Small),
            other => Err(Error::Config(format!("unknown preset '{other}' (base|small)"))),
        }
    }
}

impl ModelConfig {
    /// Same layer layout with different widths, for desk-scale runs.
    pub fn scaled(mut self, embed_dim: usize, hidden_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("src_vocab_size", self.src_vocab_size),
            ("tgt_vocab_size", self.tgt_vocab_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }

    /// Input width of the first decoder layer (embedding plus context).
    pub fn decoder_input_dim(&self) -> usize {
        self.embed_dim + if self.use_attention { self.hidden_dim } else { 0 }
    }

    /// `key=value` lines; parsed back by [`ModelConfig::from_text`].
    pub fn to_text(&self) -> String {
        format!(
            "embed_dim={}\nhidden_dim={}\nencoder_layers={}\ndecoder_layers={}\nuse_attention={}\ndropout_p={}\nsrc_vocab_size={}\ntgt_vocab_size={}\n",
            self.embed_dim,
            self.hidden_dim,
            self.encoder_layers,
            self.decoder_layers,
            self.use_attention,
            self.dropout_p,
            self.src_vocab_size,
            self.tgt_vocab_size
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig {
            embed_dim: 0,
            hidden_dim: 0,
            encoder_layers: 0,
            decoder_layers: 0,
            use_attention: false,
            dropout_p: 0.0,
            src_vocab_size: 0,
            tgt_vocab_size: 0,
        };
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line '{line}'")))?;
            let bad = || Error::Format(format!("bad value for {key}: '{value}'"));
            match key {
                "embed_dim" => cfg.embed_dim = value.parse().map_err(|_| bad())?,
                "hidden_dim" => cfg.hidden_dim = value.parse().map_err(|_| bad())?,
                "encoder_layers" => cfg.encoder_layers = value.parse().map_err(|_| bad())?,
                "decoder_layers" => cfg.decoder_layers = value.parse().map_err(|_| bad())?,
                "use_attention" => cfg.use_attention = value.parse().map_err(|_| bad())?,
                "dropout_p" => cfg.dropout_p = value.parse().map_err(|_| bad())?,
                "src_vocab_size" => cfg.src_vocab_size = value.parse().map_err(|_| bad())?,
                "tgt_vocab_size" => cfg.tgt_vocab_size = value.parse().map_err(|_| bad())?,
                other => return Err(Error::Format(format!("unknown config key '{other}'"))),
            }
        }
        cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(cfg)
    }
}
