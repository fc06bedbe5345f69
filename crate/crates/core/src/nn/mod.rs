//! From-scratch CNN-LSTM classifier: layers with hand-written backward
//! passes, Adam, Xavier initialization, training and a binary model format.

pub mod adam;
mod denormal;
mod init;
mod io;
pub mod layers;
mod model;
mod real;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use denormal::FlushDenormals;
pub use init::{fans, xavier_init, FORGET_GATE_BIAS};
pub use io::{FORMAT_VERSION, MAGIC};
pub use model::{CnnStage, ConvSpec, Entry, EntryMut, ForwardCache, Mode, ModelParams, ModelSpec, PoolSpec, Variant};
pub use real::{fast_tanh, Real};
pub use tensor::Tensor;
pub use train::{evaluate, predict, predict_log_probs, train, train_with, EpochRecord, Examples, TrainConfig, TrainOutcome, INFERENCE_CHUNK};
