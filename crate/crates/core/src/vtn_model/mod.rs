//! Video transformer: per-frame spatial encoder, windowed temporal encoder,
//! linear classification head and a two-layer projection head.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{
    decode_archive, encode_archive, model_config_from_meta, params_from_archive, read_archive, write_archive, Archive,
    RawTensor,
};
pub use config::{count_params, head_params, ModelConfig, ParamCount};
pub use forward::{
    classify, clip_logits, forward, forward_train, project, spatial_encode, temporal_encode, EmbeddingSequence,
    ForwardOptions, ForwardOutput, ForwardTape, Logits, Mode, ProjectionSet, Rows,
};
pub use params::{ModelParams, INIT_STD};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
