pub mod events_io;
pub mod frames;
pub mod gradcheck;
pub mod harness;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod vtn_model;

pub use scalar::{DType, Scalar};

pub type ModelParamsF32 = vtn_model::ModelParams<f32>;
pub type ModelParamsF64 = vtn_model::ModelParams<f64>;
pub type EventFrameF32 = frames::EventFrame<f32>;
pub type ClipF32 = frames::Clip<f32>;
pub type VideoF32 = frames::Video<f32>;
