//! On-disk forms of encoded data.
//!
//! Frames directory (externally encoded videos):
//! ```text
//! <dir>/meta.json         {"source_id", "label", "size", "channels", "num_frames", "rho_usec"?}
//! <dir>/000000.f32 ...    one file per frame, size*size*channels little-endian f32, [row][col][channel]
//! ```
//!
//! Encoding cache: `<dir>/<id>.evt` canonical slices plus `<dir>/encoding.json`
//! recording the [`EncoderConfig`] and the slice list.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EventFrame, FramesError, Result, Video};
use crate::events_io::{read_canonical_file, write_canonical_file, EventStream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesMeta {
    pub source_id: String,
    pub label: usize,
    pub size: usize,
    pub channels: usize,
    pub num_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_usec: Option<u64>,
}

fn store_err(path: &Path, e: impl ToString) -> FramesError {
    FramesError::Store {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("{i:06}.f32"))
}

pub fn save_frames_dir<T: Scalar>(dir: &Path, video: &Video<T>, rho_usec: Option<u64>) -> Result<()> {
    let first = video
        .frames
        .first()
        .ok_or_else(|| store_err(dir, "video has no frames"))?;
    fs::create_dir_all(dir).map_err(|e| store_err(dir, e))?;
    let meta = FramesMeta {
        source_id: video.source_id.clone(),
        label: video.label,
        size: first.size,
        channels: first.channels,
        num_frames: video.frames.len(),
        rho_usec,
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| store_err(&meta_path, e))?;
    fs::write(&meta_path, json).map_err(|e| store_err(&meta_path, e))?;
    for (i, f) in video.frames.iter().enumerate() {
        let bytes: Vec<u8> = f.data.iter().flat_map(|v| (v.to_f64c() as f32).to_le_bytes()).collect();
        let p = frame_path(dir, i);
        fs::write(&p, bytes).map_err(|e| store_err(&p, e))?;
    }
    Ok(())
}

pub fn load_frames_dir<T: Scalar>(dir: &Path) -> Result<Video<T>> {
    let meta_path = dir.join("meta.json");
    let text = fs::read(&meta_path).map_err(|e| store_err(&meta_path, e))?;
    let meta: FramesMeta = serde_json::from_slice(&text).map_err(|e| store_err(&meta_path, e))?;
    if meta.num_frames == 0 || meta.size == 0 || meta.channels == 0 {
        return Err(store_err(&meta_path, "empty frame geometry"));
    }
    let per_frame = meta.size * meta.size * meta.channels;
    let rho = meta.rho_usec.unwrap_or(1);
    let mut frames = Vec::with_capacity(meta.num_frames);
    for i in 0..meta.num_frames {
        let p = frame_path(dir, i);
        let bytes = fs::read(&p).map_err(|e| store_err(&p, e))?;
        if bytes.len() != per_frame * 4 {
            return Err(store_err(
                &p,
                format!("expected {} bytes, found {}", per_frame * 4, bytes.len()),
            ));
        }
        let data: Vec<T> = bytes
            .chunks_exact(4)
            .map(|b| T::from_f64c(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        if data.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(store_err(&p, "frame values must be finite and non-negative"));
        }
        frames.push(EventFrame {
            data,
            size: meta.size,
            channels: meta.channels,
            index: i,
            t_start: i as u64 * rho,
            t_end: (i as u64 + 1) * rho,
        });
    }
    Ok(Video {
        frames,
        source_id: meta.source_id,
        label: meta.label,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingCache {
    pub encoder: EncoderConfig,
    /// Slice ids; each is stored as `<id>.evt`.
    pub entries: Vec<String>,
}

pub fn write_encoding_cache(dir: &Path, encoder: &EncoderConfig, slices: &[(String, EventStream)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| store_err(dir, e))?;
    for (id, s) in slices {
        write_canonical_file(&dir.join(format!("{id}.evt")), s)?;
    }
    let sidecar = EncodingCache {
        encoder: encoder.clone(),
        entries: slices.iter().map(|(id, _)| id.clone()).collect(),
    };
    let p = dir.join("encoding.json");
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| store_err(&p, e))?;
    fs::write(&p, json).map_err(|e| store_err(&p, e))
}

pub fn read_encoding_cache(dir: &Path) -> Result<(EncodingCache, Vec<(String, EventStream)>)> {
    let p = dir.join("encoding.json");
    let text = fs::read(&p).map_err(|e| store_err(&p, e))?;
    let sidecar: EncodingCache = serde_json::from_slice(&text).map_err(|e| store_err(&p, e))?;
    let slices = sidecar
        .entries
        .iter()
        .map(|id| Ok((id.clone(), read_canonical_file(&dir.join(format!("{id}.evt")))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((sidecar, slices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events_io::{synth_stream, Pattern, SynthParams};
    use crate::frames::encode_frames;

    #[test]
    fn frames_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (s, _) = synth_stream(
            Pattern::Flicker,
            &SynthParams {
                width: 16,
                height: 16,
                duration_usec: 30_000,
                rate: 0.01,
            },
            1,
        )
        .unwrap();
        let enc = EncoderConfig {
            rho_usec: 10_000,
            spatial_size: 8,
            ..EncoderConfig::default()
        };
        let v: Video<f32> = encode_frames(&s, &enc).unwrap().labelled("clip-a", 3);
        save_frames_dir(dir.path(), &v, Some(10_000)).unwrap();
        let back: Video<f32> = load_frames_dir(dir.path()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn frames_dir_rejects_short_file() {
        let dir = tempfile::tempdir().unwrap();
        let meta = FramesMeta {
            source_id: "x".into(),
            label: 0,
            size: 2,
            channels: 2,
            num_frames: 1,
            rho_usec: None,
        };
        fs::write(dir.path().join("meta.json"), serde_json::to_vec(&meta).unwrap()).unwrap();
        fs::write(dir.path().join("000000.f32"), [0u8; 12]).unwrap();
        assert!(load_frames_dir::<f32>(dir.path()).is_err());
    }

    #[test]
    fn encoding_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (s, _) = synth_stream(
            Pattern::RotatingDot,
            &SynthParams {
                width: 16,
                height: 16,
                duration_usec: 30_000,
                rate: 0.01,
            },
            2,
        )
        .unwrap();
        let enc = EncoderConfig::default();
        write_encoding_cache(dir.path(), &enc, &[("a".into(), s.clone())]).unwrap();
        let (side, slices) = read_encoding_cache(dir.path()).unwrap();
        assert_eq!(side.encoder, enc);
        assert_eq!(slices, vec![("a".to_string(), s)]);
    }
}
