use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{count_windows, render_frame, Clip, CropRect, EncoderConfig, FramesError, Result};
use crate::events_io::{slice_stream, EventStream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Probability of deleting each event.
    pub drop_prob: f64,
    /// Candidate aggregation windows, microseconds.
    pub rho_choices: Vec<u64>,
    /// Crop area as a fraction of the sensor, `[lo, hi]`.
    pub crop_scale_range: [f64; 2],
    /// Left/right sensitive datasets (e.g. left vs right hand gestures)
    /// should keep this at 0.
    pub hflip_prob: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            drop_prob: 0.2,
            rho_choices: vec![25_000, 50_000, 100_000],
            crop_scale_range: [0.8, 1.0],
            hflip_prob: 0.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// No randomness left except the seed.
    pub fn identity(rho_usec: u64) -> Self {
        Self {
            drop_prob: 0.0,
            rho_choices: vec![rho_usec],
            crop_scale_range: [1.0, 1.0],
            hflip_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FramesError::Augment(m.into()));
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return bad("drop_prob must lie in [0, 1]");
        }
        if self.rho_choices.is_empty() {
            return bad("rho_choices must not be empty");
        }
        if self.rho_choices.contains(&0) {
            return bad("rho_choices must all be > 0");
        }
        let [lo, hi] = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad("crop_scale_range must satisfy 0 < lo <= hi <= 1");
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return bad("hflip_prob must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn max_rho(&self) -> u64 {
        self.rho_choices.iter().copied().max().unwrap_or(1)
    }
}

/// Keeps each event independently with probability `1 - p`.
pub fn event_drop(stream: &EventStream, p: f64, seed: u64) -> Result<EventStream> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FramesError::Augment(format!("drop probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = stream
        .events
        .iter()
        .filter(|_| rng.random::<f64>() >= p)
        .copied()
        .collect();
    Ok(EventStream::new(stream.width, stream.height, events))
}

/// Temporal placement of a clip: `n` frames anchored at `start_usec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipSpec {
    pub n: usize,
    pub start_usec: u64,
}

/// The random draws behind one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDraw {
    pub rho_usec: u64,
    pub drop_seed: u64,
    pub crop: CropRect,
    pub hflip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoViews<T> {
    pub view1: Clip<T>,
    pub view2: Clip<T>,
    pub trace: [ViewDraw; 2],
}

fn draw_view(rng: &mut ChaCha8Rng, aug: &AugmentConfig, width: usize, height: usize) -> ViewDraw {
    let rho_usec = aug.rho_choices[rng.random_range(0..aug.rho_choices.len())];
    let drop_seed = rng.next_u64();
    let [lo, hi] = aug.crop_scale_range;
    let scale = lo + rng.random::<f64>() * (hi - lo);
    let (cw, ch) = (scale.sqrt() * width as f64, scale.sqrt() * height as f64);
    let x0 = rng.random::<f64>() * (width as f64 - cw);
    let y0 = rng.random::<f64>() * (height as f64 - ch);
    let hflip = rng.random::<f64>() < aug.hflip_prob;
    ViewDraw {
        rho_usec,
        drop_seed,
        crop: CropRect {
            x0,
            y0,
            width: cw,
            height: ch,
        },
        hflip,
    }
}

/// Encodes `n` frames of `draw.rho_usec` starting at `start`. Windows past
/// the end of the stream repeat the last frame that still holds data.
fn render_view<T: Scalar>(
    stream: &EventStream,
    spec: ClipSpec,
    encoder: &EncoderConfig,
    p: f64,
    draw: &ViewDraw,
) -> Result<Clip<T>> {
    let rho = draw.rho_usec;
    let span_end = spec.start_usec.saturating_add(rho.saturating_mul(spec.n as u64));
    let window = slice_stream(stream, spec.start_usec, span_end)?;
    let kept = event_drop(&window, p, draw.drop_seed)?;
    let remaining = stream.duration().saturating_sub(spec.start_usec);
    let real = (remaining.div_ceil(rho) as usize).clamp(1, spec.n);
    let grids = count_windows(&kept, 0, rho, real);
    let mut frames = Vec::with_capacity(spec.n);
    for t in 0..spec.n {
        let g = &grids[t.min(real - 1)];
        let t0 = spec.start_usec + t as u64 * rho;
        frames.push(render_frame(g, encoder, draw.crop, draw.hflip, t, t0, t0 + rho));
    }
    Ok(Clip {
        frames,
        start_index: (spec.start_usec / rho) as usize,
    })
}

/// Builds two independently augmented views of the same temporal anchor.
/// Each view draws its own window length, drop realization, crop and flip;
/// frame `t` of both views starts `t` windows after `start_usec`.
pub fn make_two_views<T: Scalar>(
    stream: &EventStream,
    spec: ClipSpec,
    aug: &AugmentConfig,
    encoder: &EncoderConfig,
) -> Result<TwoViews<T>> {
    aug.validate()?;
    encoder.validate()?;
    if spec.n == 0 {
        return Err(FramesError::ClipLength);
    }
    let (w, h) = (stream.width as usize, stream.height as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(aug.seed);
    let d1 = draw_view(&mut rng, aug, w, h);
    let d2 = draw_view(&mut rng, aug, w, h);
    let view1 = render_view(stream, spec, encoder, aug.drop_prob, &d1)?;
    let view2 = render_view(stream, spec, encoder, aug.drop_prob, &d2)?;
    Ok(TwoViews {
        view1,
        view2,
        trace: [d1, d2],
    })
}

/// Uniform anchor such that the longest candidate window still fits `n`
/// frames inside the stream when possible.
pub fn random_clip_start(stream: &EventStream, n: usize, aug: &AugmentConfig, rng: &mut impl Rng) -> u64 {
    let span = aug.max_rho().saturating_mul(n as u64);
    let slack = stream.duration().saturating_sub(span);
    if slack == 0 {
        0
    } else {
        rng.random_range(0..=slack)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events_io::{synth_stream, Pattern, SynthParams};
    use crate::frames::{encode_frames, ChannelLayout, Normalization};

    fn stream() -> EventStream {
        synth_stream(
            Pattern::RotatingDot,
            &SynthParams {
                width: 32,
                height: 32,
                duration_usec: 200_000,
                rate: 0.05,
            },
            4,
        )
        .unwrap()
        .0
    }

    fn raw_encoder(size: usize) -> EncoderConfig {
        EncoderConfig {
            rho_usec: 10_000,
            spatial_size: size,
            channel_layout: ChannelLayout::TwoChannel,
            normalization: Normalization::None,
        }
    }

    #[test]
    fn drop_extremes() {
        let s = stream();
        assert_eq!(event_drop(&s, 0.0, 1).unwrap(), s);
        let none = event_drop(&s, 1.0, 1).unwrap();
        assert!(none.is_empty());
        assert_eq!((none.width, none.height), (32, 32));
        assert!(event_drop(&s, 1.5, 1).is_err());
        assert!(event_drop(&s, -0.1, 1).is_err());
    }

    #[test]
    fn drop_half_within_three_sigma() {
        let events = (0..10_000)
            .map(|t| crate::events_io::EventRecord::new(0, 0, crate::events_io::Polarity::Positive, t))
            .collect();
        let s = EventStream::new(1, 1, events);
        let kept = event_drop(&s, 0.5, 77).unwrap();
        assert!((4850..=5150).contains(&kept.len()), "{}", kept.len());
    }

    #[test]
    fn drop_keeps_a_subsequence() {
        let s = stream();
        let kept = event_drop(&s, 0.3, 5).unwrap();
        let mut it = s.events.iter();
        for e in &kept.events {
            assert!(it.any(|o| o == e));
        }
    }

    #[test]
    fn identity_augmentation_gives_identical_views() {
        let s = stream();
        let spec = ClipSpec {
            n: 4,
            start_usec: 20_000,
        };
        let v = make_two_views::<f32>(&s, spec, &AugmentConfig::identity(10_000), &raw_encoder(32)).unwrap();
        assert_eq!(v.view1, v.view2);
        assert_eq!(v.view1.len(), 4);
    }

    #[test]
    fn same_seed_same_pair() {
        let s = stream();
        let aug = AugmentConfig {
            seed: 11,
            rho_choices: vec![5_000, 10_000],
            hflip_prob: 0.5,
            ..AugmentConfig::default()
        };
        let spec = ClipSpec { n: 6, start_usec: 0 };
        let a = make_two_views::<f32>(&s, spec, &aug, &raw_encoder(16)).unwrap();
        let b = make_two_views::<f32>(&s, spec, &aug, &raw_encoder(16)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coarse_window_frames_sum_fine_pairs() {
        let s = stream();
        let rho = 10_000;
        let fine: crate::frames::Video<f64> = encode_frames(&s, &raw_encoder(32)).unwrap();
        let aug = AugmentConfig {
            rho_choices: vec![rho, 2 * rho],
            drop_prob: 0.0,
            crop_scale_range: [1.0, 1.0],
            hflip_prob: 0.0,
            seed: 0,
        };
        let n = 5;
        let start = 3 * rho;
        let mut seen_coarse = false;
        for seed in 0..16 {
            let aug = AugmentConfig { seed, ..aug.clone() };
            let views = make_two_views::<f64>(&s, ClipSpec { n, start_usec: start }, &aug, &raw_encoder(32)).unwrap();
            for (view, draw) in [(&views.view1, &views.trace[0]), (&views.view2, &views.trace[1])] {
                for t in 0..n {
                    let f = &view.frames[t];
                    assert_eq!(f.t_start, start + t as u64 * draw.rho_usec);
                    let expected = if draw.rho_usec == 2 * rho {
                        seen_coarse = true;
                        fine.frames[3 + 2 * t].total() + fine.frames[4 + 2 * t].total()
                    } else {
                        fine.frames[3 + t].total()
                    };
                    assert_eq!(f.total(), expected);
                }
            }
        }
        assert!(seen_coarse);
    }

    #[test]
    fn short_stream_pads_with_last_frame() {
        let s = stream();
        let spec = ClipSpec {
            n: 8,
            start_usec: 150_000,
        };
        let v = make_two_views::<f64>(&s, spec, &AugmentConfig::identity(10_000), &raw_encoder(32)).unwrap();
        // 50 ms of data left at 10 ms windows: frames 5..8 repeat frame 4.
        for t in 5..8 {
            assert_eq!(v.view1.frames[t].data, v.view1.frames[4].data);
        }
        assert_ne!(v.view1.frames[4].data, v.view1.frames[3].data);
    }

    #[test]
    fn empty_rho_choices_rejected() {
        let aug = AugmentConfig {
            rho_choices: vec![],
            ..AugmentConfig::default()
        };
        assert!(make_two_views::<f32>(&stream(), ClipSpec { n: 2, start_usec: 0 }, &aug, &raw_encoder(8)).is_err());
    }
}
