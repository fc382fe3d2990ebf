//! Dataset manifests, run configuration and the operations behind the CLI.

mod commands;
mod config;
mod dvs;
mod manifest;
mod synth_corpus;

use std::path::Path;

pub use commands::{
    encoder_for_checkpoint, load_model, run_bench, run_eval, run_prepare_dvs, run_synth, run_train, TrainSummary,
    EVAL_REPORT_FILE, MODEL_FILE, RESOLVED_CONFIG_FILE,
};
pub use config::{DataConfig, RunConfig};
pub use dvs::{
    build_dvs_manifest, subject_of, DvsProtocol, BACKGROUND_CLASS_ID, DEFAULT_LAST_TRAIN_SUBJECT, DVS_CLASS_NAMES,
};
pub use manifest::{
    check_subject_disjoint, load_streams, load_video, read_event_file, DatasetManifest, ManifestSample, SampleKind,
    Split,
};
pub use synth_corpus::{build_synth_manifest, SynthSpec};

use crate::events_io::EventsError;
use crate::frames::FramesError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{file}: invalid config at `{json_path}`: {reason}")]
    Config {
        file: String,
        json_path: String,
        reason: String,
    },
    #[error("subjects in both splits: {0:?}")]
    SubjectOverlap(Vec<String>),
    #[error("sample `{source_id}`: {reason}")]
    Sample { source_id: String, reason: String },
    #[error("missing label file {0}")]
    MissingLabels(String),
    #[error(transparent)]
    Events(#[from] EventsError),
    #[error(transparent)]
    Frames(#[from] FramesError),
    #[error(transparent)]
    Pipeline(Box<crate::pipeline::PipelineError>),
}

impl From<crate::pipeline::PipelineError> for HarnessError {
    fn from(e: crate::pipeline::PipelineError) -> Self {
        match e {
            crate::pipeline::PipelineError::Data(inner) => inner,
            other => Self::Pipeline(Box::new(other)),
        }
    }
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: impl ToString) -> Self {
        Self::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
