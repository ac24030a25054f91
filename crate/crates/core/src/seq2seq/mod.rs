//! LSTM encoder-decoder with optional additive attention, written against
//! flat `f64` parameter buffers.

mod batch;
mod config;
mod decode;
pub mod linalg;
mod lstm;
mod model;
mod params;

pub use batch::Batch;
pub use config::{ModelConfig, Preset};
pub use decode::{greedy_decode, greedy_decode_batch};
pub use model::{attention_weights, backward_gradients, forward_teacher_forced, DropoutMasks, ForwardOutput};
pub use params::{AttentionSlots, Layout, LstmSlots, Parameters, Slot, FORGET_BIAS, INIT_RANGE};
