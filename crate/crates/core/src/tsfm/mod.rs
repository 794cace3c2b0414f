//! Encoder-decoder transformer forecaster: scalar embedding, sinusoidal
//! positions, attention and convolution-pooling blocks, a linear head,
//! corpus pretraining and per-series fine-tuning.

mod attention;
mod config;
mod forecaster;
mod model;

pub use attention::{multi_head_attention, positional_encoding, scaled_dot_attention, AttentionWeights};
pub use config::{TransformerConfig, LAYER_NORM_EPSILON};
pub use forecaster::{
    sidecar_path, FineTuneOptions, Provenance, TrainOptions, TrainingCurve, TrainingState,
    TransformerForecaster, TsfmModel,
};

#[cfg(test)]
mod tests;
