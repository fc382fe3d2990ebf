use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::events_io::{slice_stream, EventStream};
use crate::frames::{encode_frames, Clip, EncoderConfig};
use crate::scalar::Scalar;
use crate::vtn_model::{clip_logits, ModelParams};

pub const MIN_TRIALS: usize = 30;
pub const MIN_WARMUP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample mean and (n - 1) standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, sd: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub preprocess_ms: MeanSd,
    pub forward_ms: MeanSd,
    pub trials: usize,
    pub warmup: usize,
    pub hardware: String,
}

pub fn hardware_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{cpu}; {}-{}; {} threads",
        std::env::consts::ARCH,
        std::env::consts::OS,
        rayon::current_num_threads()
    )
}

/// Builds the first `n`-frame clip of `stream`: slicing plus frame encoding,
/// no augmentation.
pub fn preprocess_clip<T: Scalar>(stream: &EventStream, encoder: &EncoderConfig, n: usize) -> Result<Clip<T>> {
    let span = encoder.rho_usec.saturating_mul(n as u64).min(stream.duration().max(1));
    let window = slice_stream(stream, 0, span)?;
    let video = encode_frames::<T>(&window, encoder)?;
    let last = video.frames.len() - 1;
    Ok(Clip {
        frames: (0..n).map(|i| video.frames[i.min(last)].clone()).collect(),
        start_index: 0,
    })
}

/// Times preprocessing and a batch-1 eval forward separately over `trials`
/// runs after `warmup` untimed ones.
pub fn benchmark<T: Scalar>(
    params: &ModelParams<T>,
    sample: &EventStream,
    encoder: &EncoderConfig,
    trials: usize,
    warmup: usize,
) -> Result<TimingReport> {
    if trials < MIN_TRIALS {
        return Err(PipelineError::Config(format!(
            "benchmark needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let warmup = warmup.max(MIN_WARMUP);
    let n = params.config.clip_len;
    let mut pre = Vec::with_capacity(trials);
    let mut fwd = Vec::with_capacity(trials);
    for i in 0..warmup + trials {
        let t0 = Instant::now();
        let clip = preprocess_clip::<T>(sample, encoder, n)?;
        let t1 = Instant::now();
        let logits = clip_logits(params, &clip)?;
        let t2 = Instant::now();
        std::hint::black_box(&logits);
        if i >= warmup {
            pre.push((t1 - t0).as_secs_f64() * 1e3);
            fwd.push((t2 - t1).as_secs_f64() * 1e3);
        }
    }
    Ok(TimingReport {
        preprocess_ms: MeanSd::of(&pre),
        forward_ms: MeanSd::of(&fwd),
        trials,
        warmup,
        hardware: hardware_descriptor(),
    })
}
