//! Training, video-level inference, evaluation and timing.

mod adam;
mod bench;
mod inference;
mod schedule;
mod train;

use std::path::Path;

pub use adam::{adam_step, AdamState};
pub use bench::{benchmark, hardware_descriptor, preprocess_clip, MeanSd, TimingReport, MIN_TRIALS, MIN_WARMUP};
pub use inference::{argmax, evaluate, predict_video, ClipClassifier, EvalReport, Prediction};
pub use schedule::{lr_at, TrainConfig};
pub use train::{
    load_train_samples, sample_gradient, sample_views, train, train_samples, Control, EpochHook, EpochLog,
    TrainCheckpoint, TrainOptions, TrainOutcome, TrainSample, CHECKPOINT_FILE, LOG_FILE,
};

use crate::events_io::EventsError;
use crate::frames::FramesError;
use crate::harness::HarnessError;
use crate::losses::LossError;
use crate::vtn_model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite {what} in `{block}`")]
    NonFinite { what: String, block: String },
    #[error("loss diverged in epoch {epoch} on sample `{source_id}`")]
    Divergence { epoch: usize, source_id: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Frames(#[from] FramesError),
    #[error(transparent)]
    Events(#[from] EventsError),
    #[error(transparent)]
    Data(#[from] HarnessError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl ToString) -> Self {
        Self::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "EVENTRANSACT_THREADS";

/// Worker pool sized by `EVENTRANSACT_THREADS` when set, else by rayon's
/// default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| PipelineError::Config(format!("{THREADS_ENV}=`{v}` is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| PipelineError::Config(e.to_string()))
}
