use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{adam_step, lr_at, AdamState, PipelineError, Result, TrainConfig};
use crate::events_io::EventStream;
use crate::frames::{derive_seed, make_two_views, random_clip_start, sample_clip_random, Clip, ClipSpec, Video};
use crate::harness::{load_streams, load_video, DatasetManifest, ManifestSample, SampleKind};
use crate::losses::{total_loss_with_grad, LossParts};
use crate::scalar::Scalar;
use crate::vtn_model::{
    encode_archive, forward_train, model_config_from_meta, params_from_archive, read_archive, write_archive,
    ForwardOptions, Mode, ModelConfig, ModelParams,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.etck";
pub const LOG_FILE: &str = "train_log.jsonl";

/// One line of the JSON-lines training log. `epoch` counts completed epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Learning rate of the epoch's last optimizer step.
    pub lr: f64,
    pub ce: f64,
    pub ec: f64,
    pub total: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub type EpochHook<'a, T> = dyn FnMut(&EpochLog, &ModelParams<T>) -> Control + 'a;

#[derive(Default)]
pub struct TrainOptions<'a, T> {
    /// Checkpoint and log directory; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
    /// Called after every epoch, once its checkpoint is on disk.
    pub hook: Option<&'a mut EpochHook<'a, T>>,
}

pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    pub log: Vec<EpochLog>,
    pub epochs_completed: usize,
    pub stopped_early: bool,
}

/// Parameters, optimizer moments and schedule position. Every random draw of
/// training is a function of `(seed, epoch, source_id)`, so the seed and the
/// epoch count are the complete generator state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainCheckpoint<T> {
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    pub train_config: TrainConfig,
    pub epoch: usize,
}

impl<T: Scalar> TrainCheckpoint<T> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = json!({
            "model_config": self.params.config,
            "train_config": self.train_config,
            "epoch": self.epoch,
            "adam_step": self.adam.step,
            "rng": { "seed": self.train_config.seed, "next_epoch": self.epoch },
        });
        let mut tensors = self.params.tensors_with_prefix("params/");
        tensors.extend(self.adam.m.tensors_with_prefix("adam_m/"));
        tensors.extend(self.adam.v.tensors_with_prefix("adam_v/"));
        write_archive(path, &encode_archive(&meta, &tensors)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let archive = read_archive(path)?;
        let config = model_config_from_meta(&archive.meta)?;
        let field = |name: &str| {
            archive
                .meta
                .get(name)
                .cloned()
                .ok_or_else(|| PipelineError::Checkpoint(format!("{}: metadata lacks `{name}`", path.display())))
        };
        let bad = |e: serde_json::Error| PipelineError::Checkpoint(format!("{}: {e}", path.display()));
        let train_config: TrainConfig = serde_json::from_value(field("train_config")?).map_err(bad)?;
        let epoch: usize = serde_json::from_value(field("epoch")?).map_err(bad)?;
        let step: u64 = serde_json::from_value(field("adam_step")?).map_err(bad)?;
        Ok(Self {
            params: params_from_archive(&archive, &config, "params/")?,
            adam: AdamState {
                m: params_from_archive(&archive, &config, "adam_m/")?,
                v: params_from_archive(&archive, &config, "adam_v/")?,
                step,
            },
            train_config,
            epoch,
        })
    }
}

/// A training sample held in memory.
pub enum TrainSample<T> {
    Events {
        source_id: String,
        label: usize,
        stream: EventStream,
    },
    Frames(Video<T>),
}

impl<T> TrainSample<T> {
    pub fn source_id(&self) -> &str {
        match self {
            Self::Events { source_id, .. } => source_id,
            Self::Frames(v) => &v.source_id,
        }
    }

    pub fn label(&self) -> usize {
        match self {
            Self::Events { label, .. } => *label,
            Self::Frames(v) => v.label,
        }
    }
}

pub fn load_train_samples<T: Scalar>(manifest: &DatasetManifest, config: &TrainConfig) -> Result<Vec<TrainSample<T>>> {
    let events: Vec<ManifestSample> = manifest
        .samples
        .iter()
        .filter(|s| s.kind == SampleKind::Events)
        .cloned()
        .collect();
    let mut streams = load_streams(&events)?.into_iter();
    manifest
        .samples
        .iter()
        .map(|s| match s.kind {
            SampleKind::Events => Ok(TrainSample::Events {
                source_id: s.source_id.clone(),
                label: s.label,
                stream: streams.next().expect("one stream per event sample"),
            }),
            SampleKind::Frames => Ok(TrainSample::Frames(load_video(s, None, &config.encoder)?)),
        })
        .collect()
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The two augmented views a sample contributes in `epoch`. Frame-directory
/// samples cannot be re-encoded, so both views are the same random clip.
pub fn sample_views<T: Scalar>(
    sample: &TrainSample<T>,
    epoch: usize,
    config: &TrainConfig,
) -> Result<(Clip<T>, Clip<T>)> {
    let seed = derive_seed(epoch_seed(config.seed, epoch), sample.source_id());
    match sample {
        TrainSample::Events { stream, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start_usec = random_clip_start(stream, config.clip_len, &config.augment, &mut rng);
            let mut aug = config.augment.clone();
            aug.seed = rng.next_u64();
            let views = make_two_views(
                stream,
                ClipSpec {
                    n: config.clip_len,
                    start_usec,
                },
                &aug,
                &config.encoder,
            )?;
            Ok((views.view1, views.view2))
        }
        TrainSample::Frames(video) => {
            let clip = sample_clip_random(video, config.clip_len, seed)?;
            Ok((clip.clone(), clip))
        }
    }
}

/// Loss parts and parameter gradients for one sample.
pub fn sample_gradient<T: Scalar>(
    params: &ModelParams<T>,
    sample: &TrainSample<T>,
    epoch: usize,
    config: &TrainConfig,
) -> Result<(LossParts<T>, ModelParams<T>)> {
    let (v1, v2) = sample_views(sample, epoch, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(epoch_seed(config.seed, epoch), sample.source_id()) ^ 0xD50F);
    let options = ForwardOptions {
        logits_from_both_views: config.logits_from_both_views,
    };
    let (out, tape) = forward_train(params, &v1, &v2, Mode::Train, options, Some(&mut rng))?;
    let (p1, p2) = (
        out.proj1.as_ref().expect("projections"),
        out.proj2.as_ref().expect("projections"),
    );
    let diverged = || PipelineError::Divergence {
        epoch: epoch + 1,
        source_id: sample.source_id().to_string(),
    };
    let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
    if !(finite(&out.logits) && finite(&p1.data) && finite(&p2.data)) {
        return Err(diverged());
    }
    let (parts, g) = total_loss_with_grad(&out.logits, sample.label(), p1, p2, &config.loss_config())?;
    if !parts.total.is_finite() {
        return Err(diverged());
    }
    Ok((parts, tape.backward(params, &g.dlogits, &g.dproj1, &g.dproj2)))
}

struct Totals {
    ce: f64,
    ec: f64,
    total: f64,
    count: usize,
}

/// One optimizer step over `group`. Per-sample gradients are computed in
/// parallel and summed in sample order, so the result does not depend on the
/// thread count.
struct State<T> {
    params: ModelParams<T>,
    adam: AdamState<T>,
}

fn group_step<T: Scalar>(
    state: &mut State<T>,
    samples: &[TrainSample<T>],
    group: &[usize],
    epoch: usize,
    lr: f64,
    config: &TrainConfig,
    totals: &mut Totals,
) -> Result<()> {
    let State { params, adam } = state;
    let mut sum = params.zeros_like();
    let width = rayon::current_num_threads().max(1);
    for chunk in group.chunks(width) {
        let results: Vec<(LossParts<T>, ModelParams<T>)> = chunk
            .par_iter()
            .map(|&i| sample_gradient(&*params, &samples[i], epoch, config))
            .collect::<Result<_>>()?;
        for (parts, g) in results {
            sum.add_assign(&g);
            totals.ce += parts.ce.to_f64c();
            totals.ec += parts.ec.to_f64c();
            totals.total += parts.total.to_f64c();
            totals.count += 1;
        }
    }
    sum.scale(T::from_f64c(1.0 / group.len() as f64));
    adam_step(params, &sum, adam, lr, config)
}

fn read_log(path: &Path, upto: usize) -> Result<Vec<EpochLog>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(_) => return Ok(Vec::new()),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<EpochLog>(l).map_err(|e| PipelineError::io(path, e)))
        .filter(|r| r.as_ref().map_or(true, |e| e.epoch <= upto))
        .collect()
}

fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut text = String::new();
    for e in log {
        text.push_str(&serde_json::to_string(e).expect("log serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn append_log(path: &Path, entry: &EpochLog) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| PipelineError::io(path, e))?;
    writeln!(f, "{}", serde_json::to_string(entry).expect("log serializes")).map_err(|e| PipelineError::io(path, e))
}

/// Trains from the manifest's samples. With an output directory, a
/// checkpoint is written after every epoch (atomically) and a divergence
/// aborts with the previous one left intact.
pub fn train<T: Scalar>(
    manifest: &DatasetManifest,
    model_config: &ModelConfig,
    config: &TrainConfig,
    options: TrainOptions<'_, T>,
) -> Result<TrainOutcome<T>> {
    manifest.validate()?;
    if manifest.samples.is_empty() {
        return Err(PipelineError::Config(format!(
            "manifest `{}` has no samples",
            manifest.name
        )));
    }
    let samples = load_train_samples::<T>(manifest, config)?;
    train_samples(&samples, model_config, config, options)
}

pub fn train_samples<T: Scalar>(
    samples: &[TrainSample<T>],
    model_config: &ModelConfig,
    config: &TrainConfig,
    mut options: TrainOptions<'_, T>,
) -> Result<TrainOutcome<T>> {
    model_config.validate()?;
    config.validate()?;
    if config.clip_len > model_config.clip_len {
        return Err(PipelineError::Config(format!(
            "clip_len {} exceeds the model's positional table ({})",
            config.clip_len, model_config.clip_len
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.label() >= model_config.num_classes) {
        return Err(PipelineError::Config(format!(
            "sample `{}` has label {} but the model has {} classes",
            s.source_id(),
            s.label(),
            model_config.num_classes
        )));
    }
    let (params, adam, first_epoch) = match &options.resume {
        Some(path) => {
            let ck = TrainCheckpoint::<T>::load(path)?;
            if ck.params.config != *model_config {
                return Err(PipelineError::Checkpoint(format!(
                    "{}: model config differs from the requested one",
                    path.display()
                )));
            }
            if ck.train_config != *config {
                return Err(PipelineError::Checkpoint(format!(
                    "{}: train config differs from the requested one",
                    path.display()
                )));
            }
            (ck.params, ck.adam, ck.epoch)
        }
        None => {
            let p = ModelParams::<T>::init(model_config, config.seed);
            let a = AdamState::new(&p);
            (p, a, 0)
        }
    };

    let log_path = options.out_dir.as_ref().map(|d| d.join(LOG_FILE));
    let mut log = Vec::new();
    if let Some(dir) = &options.out_dir {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let path = log_path.as_ref().expect("log path");
        log = read_log(path, first_epoch)?;
        if first_epoch == 0 {
            log.clear();
        }
        write_log(path, &log)?;
    }

    let mut state = State { params, adam };
    let spe = config.steps_per_epoch(samples.len());
    let group_size = config.batch_size * config.grad_accum;
    let mut stopped_early = false;
    let mut completed = first_epoch;
    for epoch in first_epoch..config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch) ^ 0x5EED));
        let mut totals = Totals {
            ce: 0.0,
            ec: 0.0,
            total: 0.0,
            count: 0,
        };
        let mut lr = 0.0;
        for (k, group) in order.chunks(group_size).enumerate() {
            lr = lr_at(epoch * spe + k, spe, config);
            group_step(&mut state, samples, group, epoch, lr, config, &mut totals)?;
        }
        let n = totals.count as f64;
        let entry = EpochLog {
            epoch: epoch + 1,
            lr,
            ce: totals.ce / n,
            ec: totals.ec / n,
            total: totals.total / n,
            wall_s: started.elapsed().as_secs_f64(),
        };
        completed = epoch + 1;
        if let Some(dir) = &options.out_dir {
            TrainCheckpoint {
                params: state.params.clone(),
                adam: state.adam.clone(),
                train_config: config.clone(),
                epoch: completed,
            }
            .save(&dir.join(CHECKPOINT_FILE))?;
            append_log(log_path.as_ref().expect("log path"), &entry)?;
        }
        log.push(entry);
        if let Some(hook) = options.hook.as_mut() {
            if hook(log.last().expect("entry"), &state.params) == Control::Stop {
                stopped_early = completed < config.epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: state.params,
        adam: state.adam,
        log,
        epochs_completed: completed,
        stopped_early,
    })
}
