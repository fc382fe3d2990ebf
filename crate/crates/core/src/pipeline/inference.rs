use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Result;
use crate::frames::{sample_clips_uniform, Clip, Video};
use crate::losses::softmax;
use crate::scalar::Scalar;
use crate::vtn_model::{clip_logits, ModelParams};

/// Anything that scores a single clip.
pub trait ClipClassifier<T>: Sync {
    fn num_classes(&self) -> usize;
    fn clip_logits(&self, clip: &Clip<T>) -> Result<Vec<T>>;
}

impl<T: Scalar> ClipClassifier<T> for ModelParams<T> {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn clip_logits(&self, clip: &Clip<T>) -> Result<Vec<T>> {
        Ok(clip_logits(self, clip)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    /// Mean of the per-clip softmax vectors.
    pub probabilities: Vec<f64>,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Averages class probabilities over `k` uniformly spaced `n`-frame clips.
pub fn predict_video<T: Scalar, M: ClipClassifier<T> + ?Sized>(
    model: &M,
    video: &Video<T>,
    n: usize,
    k: usize,
) -> Result<Prediction> {
    let clips = sample_clips_uniform(video, n, k)?;
    let mut mean = vec![0.0; model.num_classes()];
    for clip in &clips {
        let logits = model.clip_logits(clip)?;
        for (m, p) in mean.iter_mut().zip(softmax(&logits)) {
            *m += p.to_f64c();
        }
    }
    for m in mean.iter_mut() {
        *m /= clips.len() as f64;
    }
    Ok(Prediction {
        class: argmax(&mean),
        probabilities: mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub top1_accuracy: f64,
    /// `None` for classes without test videos.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Rows are true classes, columns predictions.
    pub confusion_matrix: Vec<Vec<u64>>,
    pub num_videos: usize,
}

impl EvalReport {
    pub fn from_pairs(num_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        let mut total = 0usize;
        for (truth, pred) in pairs {
            confusion[truth][pred] += 1;
            total += 1;
        }
        let trace: u64 = (0..num_classes).map(|c| confusion[c][c]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        Self {
            top1_accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            per_class_accuracy: per_class,
            confusion_matrix: confusion,
            num_videos: total,
        }
    }
}

/// Top-1 report over labelled videos; videos are scored in parallel and the
/// result does not depend on their order.
pub fn evaluate<T: Scalar, M: ClipClassifier<T>>(
    model: &M,
    videos: &[Video<T>],
    n: usize,
    k: usize,
) -> Result<EvalReport> {
    let nc = model.num_classes();
    if let Some(v) = videos.iter().find(|v| v.label >= nc) {
        return Err(super::PipelineError::Config(format!(
            "video `{}` has label {} but the model has {nc} classes",
            v.source_id, v.label
        )));
    }
    let preds: Vec<usize> = videos
        .par_iter()
        .map(|v| predict_video(model, v, n, k).map(|p| p.class))
        .collect::<Result<_>>()?;
    Ok(EvalReport::from_pairs(nc, videos.iter().map(|v| v.label).zip(preds)))
}
