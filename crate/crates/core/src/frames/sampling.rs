use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Clip, FramesError, Result, Video};

fn padded_window<T: Clone>(video: &Video<T>, start: usize, n: usize) -> Clip<T> {
    let last = video.frames.len() - 1;
    let frames = (start..start + n).map(|i| video.frames[i.min(last)].clone()).collect();
    Clip {
        frames,
        start_index: start,
    }
}

/// Contiguous clip of `n` frames at a uniformly drawn start. Videos shorter
/// than `n` are padded by repeating their final frame.
pub fn sample_clip_random<T: Clone>(video: &Video<T>, n: usize, seed: u64) -> Result<Clip<T>> {
    if n == 0 {
        return Err(FramesError::ClipLength);
    }
    assert!(!video.frames.is_empty(), "video without frames");
    let t = video.frames.len();
    let start = if t <= n {
        0
    } else {
        ChaCha8Rng::seed_from_u64(seed).random_range(0..=t - n)
    };
    Ok(padded_window(video, start, n))
}

/// `n` distinct frames drawn at random and kept in temporal order.
pub fn sample_clip_scattered<T: Clone>(video: &Video<T>, n: usize, seed: u64) -> Result<Clip<T>> {
    if n == 0 {
        return Err(FramesError::ClipLength);
    }
    let t = video.frames.len();
    if t <= n {
        return Ok(padded_window(video, 0, n));
    }
    let mut picks = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), t, n).into_vec();
    picks.sort_unstable();
    Ok(Clip {
        start_index: picks[0],
        frames: picks.iter().map(|&i| video.frames[i].clone()).collect(),
    })
}

/// Start indices `round(j * (T - n) / (k - 1))`, rounding half up.
pub fn uniform_starts(t: usize, n: usize, k: usize) -> Vec<usize> {
    if t <= n || k == 1 {
        return vec![0; k];
    }
    let span = (t - n) as u128;
    let denom = (k - 1) as u128;
    (0..k as u128)
        .map(|j| ((2 * j * span + denom) / (2 * denom)) as usize)
        .collect()
}

/// `k` uniformly spaced clips covering the video.
pub fn sample_clips_uniform<T: Clone>(video: &Video<T>, n: usize, k: usize) -> Result<Vec<Clip<T>>> {
    if n == 0 {
        return Err(FramesError::ClipLength);
    }
    if k == 0 {
        return Err(FramesError::ClipCount);
    }
    assert!(!video.frames.is_empty(), "video without frames");
    Ok(uniform_starts(video.frames.len(), n, k)
        .into_iter()
        .map(|s| padded_window(video, s, n))
        .collect())
}
