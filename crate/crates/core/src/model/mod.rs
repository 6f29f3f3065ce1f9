//! Encoder-decoder summarizer: configuration, layers, checkpoints.

pub mod checkpoint;
pub mod config;
pub mod maps;
pub mod network;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use maps::{AttentionMap, AttentionMaps};
pub use config::{ModelConfig, StepAggregation};
pub use network::{
    positional_encoding, DecoderSource, DecoderTrace, EncodedVideo, EncoderTrace, ForwardTrace, FullTransNet,
};
