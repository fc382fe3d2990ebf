use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::pipeline::TrainConfig;
use crate::vtn_model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_manifest: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_manifest: Option<PathBuf>,
}

/// Everything a training run needs. Encoder, augmentation and loss settings
/// live inside `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
    pub output_dir: PathBuf,
    /// Uniformly spaced clips averaged per test video.
    #[serde(default = "default_eval_clips")]
    pub eval_clips: usize,
}

fn default_eval_clips() -> usize {
    5
}

impl RunConfig {
    /// Checks each section and the fields that must agree across sections.
    /// Errors carry the JSON path of the offending field.
    pub fn validate(&self, file: &str) -> Result<()> {
        let err = |json_path: &str, reason: String| HarnessError::Config {
            file: file.to_string(),
            json_path: json_path.to_string(),
            reason,
        };
        self.model.validate().map_err(|e| err("model", e.to_string()))?;
        self.train.validate().map_err(|e| err("train", e.to_string()))?;
        if self.train.clip_len > self.model.clip_len {
            return Err(err(
                "train.clip_len",
                format!("{} exceeds model.clip_len {}", self.train.clip_len, self.model.clip_len),
            ));
        }
        if self.train.encoder.channels() != self.model.in_channels {
            return Err(err(
                "train.encoder.channel_layout",
                format!(
                    "{} channels but model.in_channels is {}",
                    self.train.encoder.channels(),
                    self.model.in_channels
                ),
            ));
        }
        if self.train.encoder.spatial_size != self.model.image_size {
            return Err(err(
                "train.encoder.spatial_size",
                format!(
                    "{} but model.image_size is {}",
                    self.train.encoder.spatial_size, self.model.image_size
                ),
            ));
        }
        if self.eval_clips == 0 {
            return Err(err("eval_clips", "must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
            file: file.to_string(),
            json_path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        cfg.validate(file)?;
        Ok(cfg)
    }

    /// Parses and validates; relative paths are resolved against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.train_manifest);
        if let Some(t) = cfg.data.test_manifest.as_mut() {
            resolve(t);
        }
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
