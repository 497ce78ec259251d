//! Transformer classifier over EventConv graph signatures.
//!
//! The signature `h` (length `q * wdt`) is read as `S = q` tokens of width
//! `D = wdt`, one token per message quantity. Tokens pass through `N`
//! pre-norm encoder layers and `l` decoder layers, are flattened, and a
//! fully connected head produces two logits: index 0 is noise, index 1 is
//! real activity.
//!
//! Three routes compute the same forward pass: the tape ([`layers`]) used
//! for training and the public tensor operations, and the allocation-free
//! [`InferenceEngine`] used for streaming prediction.

pub mod layers;
mod infer;
mod model;
mod predict;
mod train;

pub use infer::{InferenceEngine, Workspace};
pub use layers::{attention, classify, decoder_forward, encoder_forward, multi_head};
pub use model::{
    DecoderLayerParams, DenoiseModel, EncoderLayerParams, FfnParams, HeadParams, LayerNormParams, MhaParams,
    ModelConfig, ModelLayout, TransformerConfig,
};
pub use predict::{predict_stream, GnnFilter, PredictMode, StreamPredictions};
pub use train::{evaluate, loss_and_grad, train, train_model, TrainConfig, TrainHistory, TrainingSample};
