//! Fixed training-data orderings for neural machine translation.
//!
//! The pipeline: load and filter a parallel corpus, pre-train a scorer
//! model, score every training pair (length, perplexity or sentence BLEU),
//! turn the scores into a fixed ordering of the corpus, train a
//! sequence-to-sequence model on minibatches drawn sequentially from that
//! ordering and evaluate it. Random-shuffle baselines use the same path.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod harness;
pub mod metrics;
pub mod numfmt;
pub mod ordering;
pub mod seq2seq;
pub mod trainer;

pub use error::{Error, Result};
pub use fingerprint::Fingerprint;
