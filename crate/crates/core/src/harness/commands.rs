use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::manifest::{load_streams, load_video, DatasetManifest, ManifestSample, SampleKind};
use super::{build_dvs_manifest, build_synth_manifest, DvsProtocol, HarnessError, Result, RunConfig, SynthSpec};
use crate::events_io::EventStream;
use crate::frames::{write_encoding_cache, ChannelLayout, EncoderConfig, Video};
use crate::pipeline::{
    benchmark, evaluate, thread_pool, train, EpochLog, EvalReport, TimingReport, TrainCheckpoint, TrainOptions,
    CHECKPOINT_FILE,
};
use crate::vtn_model::{model_config_from_meta, params_from_archive, read_archive, ModelParams};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const MODEL_FILE: &str = "model.etck";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes the synthetic corpus and a record of the spec that produced it.
pub fn run_synth(out_dir: &Path, spec: &SynthSpec, seed: u64) -> Result<(DatasetManifest, DatasetManifest)> {
    create_dir(out_dir)?;
    write_json(
        &out_dir.join(RESOLVED_CONFIG_FILE),
        &json!({ "spec": spec, "seed": seed }),
    )?;
    build_synth_manifest(out_dir, spec, seed)
}

fn cache_id(source_id: &str) -> String {
    source_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Builds DVS manifests under `out_dir`. With `cache`, every segment is also
/// written as a canonical event file and the manifests point at those.
pub fn run_prepare_dvs(
    root: &Path,
    protocol: DvsProtocol,
    out_dir: &Path,
    cache: Option<&EncoderConfig>,
) -> Result<(DatasetManifest, DatasetManifest)> {
    create_dir(out_dir)?;
    write_json(
        &out_dir.join(RESOLVED_CONFIG_FILE),
        &json!({ "root": root, "protocol": protocol, "cache_encoder": cache }),
    )?;
    let (mut train, mut test) = build_dvs_manifest(root, protocol)?;
    if let Some(encoder) = cache {
        for m in [&mut train, &mut test] {
            let dir = out_dir.join("cache").join(&m.name);
            let slices: Vec<(String, EventStream)> = load_streams(&m.samples)?
                .into_iter()
                .zip(&m.samples)
                .map(|(s, sample)| (cache_id(&sample.source_id), s))
                .collect();
            write_encoding_cache(&dir, encoder, &slices)?;
            for (sample, (id, _)) in m.samples.iter_mut().zip(&slices) {
                sample.path = dir.join(format!("{id}.evt"));
                sample.segment = None;
            }
        }
    }
    train.save(&out_dir.join("train.json"))?;
    test.save(&out_dir.join("test.json"))?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_completed: usize,
    pub final_epoch: Option<EpochLog>,
    pub checkpoint: PathBuf,
    pub model: PathBuf,
    pub eval: Option<EvalReport>,
    pub seed: u64,
}

fn load_videos(manifest: &DatasetManifest, encoder: &EncoderConfig) -> Result<Vec<Video<f32>>> {
    let events: Vec<ManifestSample> = manifest
        .samples
        .iter()
        .filter(|s| s.kind == SampleKind::Events)
        .cloned()
        .collect();
    let streams = load_streams(&events)?;
    let mut stream_of = events.iter().map(|s| s.source_id.as_str()).zip(streams.iter());
    let pairs: Vec<(&ManifestSample, Option<&EventStream>)> = manifest
        .samples
        .iter()
        .map(|s| match s.kind {
            SampleKind::Events => (s, stream_of.next().map(|(_, st)| st)),
            SampleKind::Frames => (s, None),
        })
        .collect();
    pairs
        .par_iter()
        .map(|(s, st)| load_video::<f32>(s, *st, encoder))
        .collect()
}

/// Resolves the config, trains with checkpoints in `output_dir`, saves the
/// final model and evaluates on the test manifest when one is given.
pub fn run_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate("<run config>")?;
    let out = &config.output_dir;
    create_dir(out)?;
    fs::write(out.join(RESOLVED_CONFIG_FILE), config.to_json() + "\n").map_err(|e| HarnessError::io(out, e))?;
    let pool = thread_pool()?;
    pool.install(|| {
        let train_manifest = DatasetManifest::load(&config.data.train_manifest)?;
        if train_manifest.num_classes() != config.model.num_classes {
            return Err(HarnessError::Manifest(format!(
                "manifest has {} classes, model.num_classes is {}",
                train_manifest.num_classes(),
                config.model.num_classes
            )));
        }
        let checkpoint = out.join(CHECKPOINT_FILE);
        let outcome = train::<f32>(
            &train_manifest,
            &config.model,
            &config.train,
            TrainOptions {
                out_dir: Some(out.clone()),
                resume: None,
                hook: None,
            },
        )?;
        let model = out.join(MODEL_FILE);
        TrainCheckpoint {
            params: outcome.params.clone(),
            adam: outcome.adam.clone(),
            train_config: config.train.clone(),
            epoch: outcome.epochs_completed,
        }
        .save(&model)?;
        let eval = match &config.data.test_manifest {
            Some(path) => {
                let test = DatasetManifest::load(path)?;
                let videos = load_videos(&test, &config.train.encoder)?;
                let report = evaluate(&outcome.params, &videos, config.train.clip_len, config.eval_clips)?;
                write_json(&out.join(EVAL_REPORT_FILE), &report)?;
                Some(report)
            }
            None => None,
        };
        Ok(TrainSummary {
            epochs_completed: outcome.epochs_completed,
            final_epoch: outcome.log.last().cloned(),
            checkpoint,
            model,
            eval,
            seed: config.train.seed,
        })
    })
}

/// Parameters from a training checkpoint or a bare model archive.
pub fn load_model(path: &Path) -> Result<ModelParams<f32>> {
    let archive = read_archive(path).map_err(|e| HarnessError::Pipeline(Box::new(e.into())))?;
    let config = model_config_from_meta(&archive.meta).map_err(|e| HarnessError::Pipeline(Box::new(e.into())))?;
    params_from_archive(&archive, &config, "params/").map_err(|e| HarnessError::Pipeline(Box::new(e.into())))
}

/// Encoder recorded in a training checkpoint, else one matching the model
/// input geometry.
pub fn encoder_for_checkpoint(path: &Path, params: &ModelParams<f32>) -> EncoderConfig {
    if let Ok(ck) = TrainCheckpoint::<f32>::load(path) {
        return ck.train_config.encoder;
    }
    EncoderConfig {
        spatial_size: params.config.image_size,
        channel_layout: if params.config.in_channels == 3 {
            ChannelLayout::ThreeChannel
        } else {
            ChannelLayout::TwoChannel
        },
        ..EncoderConfig::default()
    }
}

pub fn run_eval(checkpoint: &Path, manifest: &Path, clips: usize, out: Option<&Path>) -> Result<EvalReport> {
    let params = load_model(checkpoint)?;
    let encoder = encoder_for_checkpoint(checkpoint, &params);
    let manifest = DatasetManifest::load(manifest)?;
    let pool = thread_pool()?;
    let report = pool.install(|| -> Result<EvalReport> {
        let videos = load_videos(&manifest, &encoder)?;
        Ok(evaluate(&params, &videos, params.config.clip_len, clips)?)
    })?;
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

pub fn run_bench(checkpoint: &Path, sample: &EventStream, trials: usize, warmup: usize) -> Result<TimingReport> {
    let params = load_model(checkpoint)?;
    let encoder = encoder_for_checkpoint(checkpoint, &params);
    Ok(benchmark(&params, sample, &encoder, trials, warmup)?)
}
