//! Deterministic synthetic event streams with simple, visually distinct
//! motion patterns.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{EventRecord, EventStream, EventsError, Polarity, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    TranslatingBar,
    RotatingDot,
    ExpandingRing,
    Flicker,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::TranslatingBar,
        Pattern::RotatingDot,
        Pattern::ExpandingRing,
        Pattern::Flicker,
    ];

    pub fn index(self) -> u32 {
        Self::ALL.iter().position(|&p| p == self).expect("listed") as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            Pattern::TranslatingBar => "translating_bar",
            Pattern::RotatingDot => "rotating_dot",
            Pattern::ExpandingRing => "expanding_ring",
            Pattern::Flicker => "flicker",
        }
    }
}

impl FromStr for Pattern {
    type Err = EventsError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| EventsError::UnknownPattern(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub width: u16,
    pub height: u16,
    pub duration_usec: u64,
    /// Mean events per microsecond.
    pub rate: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            duration_usec: 1_000_000,
            rate: 0.02,
        }
    }
}

/// Generates a stream whose event count is Poisson with mean `rate *
/// duration`. Returns the stream and the pattern index as class id.
pub fn synth_stream(pattern: Pattern, params: &SynthParams, seed: u64) -> Result<(EventStream, u32)> {
    if params.duration_usec == 0 {
        return Err(EventsError::ZeroDuration);
    }
    let (w, h) = (params.width as f64, params.height as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = params.rate.max(0.0) * params.duration_usec as f64;
    let count = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize
    } else {
        0
    };
    let mut times: Vec<u64> = (0..count).map(|_| rng.random_range(0..params.duration_usec)).collect();
    times.sort_unstable();

    // Per-sample variation: direction, phase and a small offset of the centre.
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let min_side = w.min(h);
    let cx = w / 2.0 + rng.random_range(-0.1..0.1) * w;
    let cy = h / 2.0 + rng.random_range(-0.1..0.1) * h;
    let jitter = Normal::new(0.0, (min_side / 40.0).max(0.75)).expect("finite sigma");

    let mut events = Vec::with_capacity(count);
    for t in times {
        let phase = t as f64 / params.duration_usec as f64;
        let (x, y, positive) = match pattern {
            Pattern::TranslatingBar => {
                let half = (w / 32.0).max(1.0);
                let centre = if dir > 0.0 { phase } else { 1.0 - phase } * (w - 1.0);
                let dx = rng.random_range(-half..half);
                let y = rng.random_range(0.0..h);
                (centre + dx, y, dx * dir >= 0.0)
            }
            Pattern::RotatingDot => {
                let r = 0.3 * min_side;
                let a = phase0 + dir * 3.0 * PI * phase;
                (
                    cx + r * a.cos() + jitter.sample(&mut rng),
                    cy + r * a.sin() + jitter.sample(&mut rng),
                    rng.random_bool(0.5),
                )
            }
            Pattern::ExpandingRing => {
                let r = (0.05 + 0.35 * phase) * min_side + jitter.sample(&mut rng);
                let a = rng.random_range(0.0..2.0 * PI);
                (cx + r * a.cos(), cy + r * a.sin(), rng.random_bool(0.7))
            }
            Pattern::Flicker => {
                let half = 0.2 * min_side;
                let x = cx + rng.random_range(-half..half);
                let y = cy + rng.random_range(-half..half);
                (x, y, ((phase * 8.0).floor() as u64).is_multiple_of(2))
            }
        };
        events.push(EventRecord {
            x: x.round().clamp(0.0, w - 1.0) as u16,
            y: y.round().clamp(0.0, h - 1.0) as u16,
            polarity: Polarity::from_bit(positive),
            t,
        });
    }
    Ok((EventStream::new(params.width, params.height, events), pattern.index()))
}
