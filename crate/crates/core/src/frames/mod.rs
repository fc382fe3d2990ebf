//! Event-frame encoding, clip sampling and the event-specific augmentations
//! that produce the two views of a sample.

mod augment;
mod resample;
mod sampling;
mod store;

pub use augment::{event_drop, make_two_views, random_clip_start, AugmentConfig, ClipSpec, TwoViews, ViewDraw};
pub use resample::{CropRect, Resampler};
pub use sampling::{sample_clip_random, sample_clip_scattered, sample_clips_uniform, uniform_starts};
pub use store::{
    load_frames_dir, read_encoding_cache, save_frames_dir, write_encoding_cache, EncodingCache, FramesMeta,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events_io::{EventStream, EventsError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FramesError {
    #[error("invalid encoder config: {0}")]
    Encoder(String),
    #[error("invalid augmentation config: {0}")]
    Augment(String),
    #[error("clip length must be positive")]
    ClipLength,
    #[error("clip count must be positive")]
    ClipCount,
    #[error(transparent)]
    Events(#[from] EventsError),
    #[error("frames store {path}: {reason}")]
    Store { path: String, reason: String },
}

pub type Result<T, E = FramesError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelLayout {
    /// Positive count, negative count.
    #[default]
    TwoChannel,
    /// Positive, negative and their sum.
    ThreeChannel,
}

impl ChannelLayout {
    pub fn channels(self) -> usize {
        match self {
            ChannelLayout::TwoChannel => 2,
            ChannelLayout::ThreeChannel => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Counts clamped to `k` then divided by `k`.
    ClampK(u32),
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization::ClampK(8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Aggregation window per frame, microseconds.
    pub rho_usec: u64,
    /// Side of the square output frame.
    pub spatial_size: usize,
    pub channel_layout: ChannelLayout,
    pub normalization: Normalization,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            rho_usec: 50_000,
            spatial_size: 224,
            channel_layout: ChannelLayout::TwoChannel,
            normalization: Normalization::ClampK(8),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho_usec == 0 {
            return Err(FramesError::Encoder("rho_usec must be > 0".into()));
        }
        if self.spatial_size == 0 {
            return Err(FramesError::Encoder("spatial_size must be > 0".into()));
        }
        if let Normalization::ClampK(0) = self.normalization {
            return Err(FramesError::Encoder("clamp_k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.channel_layout.channels()
    }
}

/// One `size x size x channels` frame stored row-major as `[row][col][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame<T> {
    pub data: Vec<T>,
    pub size: usize,
    pub channels: usize,
    pub index: usize,
    pub t_start: u64,
    pub t_end: u64,
}

impl<T: Scalar> EventFrame<T> {
    pub fn zeros(size: usize, channels: usize, index: usize, t_start: u64, t_end: u64) -> Self {
        Self {
            data: vec![T::zero(); size * size * channels],
            size,
            channels,
            index,
            t_start,
            t_end,
        }
    }

    pub fn at(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[(row * self.size + col) * self.channels + channel]
    }

    pub fn total(&self) -> T {
        self.data.iter().copied().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video<T> {
    pub frames: Vec<EventFrame<T>>,
    pub source_id: String,
    pub label: usize,
}

impl<T> Video<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn labelled(mut self, source_id: impl Into<String>, label: usize) -> Self {
        self.source_id = source_id.into();
        self.label = label;
        self
    }
}

/// A fixed-length run of frames fed to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip<T> {
    pub frames: Vec<EventFrame<T>>,
    pub start_index: usize,
}

impl<T> Clip<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Per-polarity counts at sensor resolution for one window.
pub(crate) struct CountGrid {
    pub width: usize,
    pub height: usize,
    /// `[row][col][pos, neg]`
    pub counts: Vec<f64>,
}

impl CountGrid {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            counts: vec![0.0; width * height * 2],
        }
    }
}

/// Counts events of a time-sorted stream into `frames` consecutive windows of
/// `rho` microseconds starting at `t0`. Events outside the covered span are
/// ignored.
pub(crate) fn count_windows(stream: &EventStream, t0: u64, rho: u64, frames: usize) -> Vec<CountGrid> {
    let (w, h) = (stream.width as usize, stream.height as usize);
    let mut grids: Vec<CountGrid> = (0..frames).map(|_| CountGrid::new(w, h)).collect();
    let end = t0.saturating_add(rho.saturating_mul(frames as u64));
    let lo = stream.events.partition_point(|e| e.t < t0);
    for e in &stream.events[lo..] {
        if e.t >= end {
            break;
        }
        let k = ((e.t - t0) / rho) as usize;
        let ch = if e.polarity.is_positive() { 0 } else { 1 };
        grids[k].counts[(e.y as usize * w + e.x as usize) * 2 + ch] += 1.0;
    }
    grids
}

/// Turns a count grid into a model frame: optional crop, area resampling to
/// `size`, optional horizontal flip, channel layout and normalization.
pub(crate) fn render_frame<T: Scalar>(
    grid: &CountGrid,
    config: &EncoderConfig,
    crop: CropRect,
    hflip: bool,
    index: usize,
    t_start: u64,
    t_end: u64,
) -> EventFrame<T> {
    let size = config.spatial_size;
    let channels = config.channels();
    let resampler = Resampler::new(grid.width, grid.height, crop, size);
    let resized = resampler.apply(&grid.counts, 2);
    let mut frame = EventFrame::zeros(size, channels, index, t_start, t_end);
    for row in 0..size {
        for col in 0..size {
            let src_col = if hflip { size - 1 - col } else { col };
            let src = (row * size + src_col) * 2;
            let (pos, neg) = (resized[src], resized[src + 1]);
            let dst = (row * size + col) * channels;
            let vals = [pos, neg, pos + neg];
            for (ch, &v) in vals.iter().take(channels).enumerate() {
                frame.data[dst + ch] = T::from_f64c(normalize(v, config.normalization));
            }
        }
    }
    frame
}

fn normalize(v: f64, n: Normalization) -> f64 {
    match n {
        Normalization::None => v,
        Normalization::ClampK(k) => v.min(k as f64) / k as f64,
    }
}

/// Encodes a whole stream into frames of `rho` microseconds. Frame `k` covers
/// `[k*rho, (k+1)*rho)`; the frame count is `ceil(duration / rho)` with a
/// single all-zero frame for an empty stream.
pub fn encode_frames<T: Scalar>(stream: &EventStream, config: &EncoderConfig) -> Result<Video<T>> {
    config.validate()?;
    let rho = config.rho_usec;
    let frames = (stream.duration().div_ceil(rho)).max(1) as usize;
    let grids = count_windows(stream, 0, rho, frames);
    let full = CropRect::full(stream.width as usize, stream.height as usize);
    let frames = grids
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let t0 = k as u64 * rho;
            render_frame(g, config, full, false, k, t0, t0 + rho)
        })
        .collect();
    Ok(Video {
        frames,
        source_id: String::new(),
        label: 0,
    })
}

/// Stable 64-bit FNV-1a, used to derive per-sample seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for one sample, independent of worker scheduling.
pub fn derive_seed(seed: u64, source_id: &str) -> u64 {
    seed ^ fnv1a(source_id.as_bytes())
}
