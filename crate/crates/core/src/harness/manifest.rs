use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::events_io::{parse_aedat, read_canonical_file, slice_stream, EventStream, EventsError, GestureSegment};
use crate::frames::{encode_frames, load_frames_dir, EncoderConfig, Video};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Canonical `.evt` or AEDAT `.aedat` event file.
    Events,
    /// Pre-encoded frames directory.
    Frames,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSample {
    pub source_id: String,
    /// Relative paths are resolved against the manifest file's directory.
    pub path: PathBuf,
    pub kind: SampleKind,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<GestureSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub class_names: Vec<String>,
    pub split: Split,
    pub samples: Vec<ManifestSample>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Labels in range and unique source ids.
    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(HarnessError::Manifest(format!("{}: no classes", self.name)));
        }
        let mut ids = BTreeSet::new();
        for s in &self.samples {
            if s.label >= self.num_classes() {
                return Err(HarnessError::Manifest(format!(
                    "{}: sample `{}` has label {} but only {} classes",
                    self.name,
                    s.source_id,
                    s.label,
                    self.num_classes()
                )));
            }
            if !ids.insert(s.source_id.as_str()) {
                return Err(HarnessError::Manifest(format!(
                    "{}: duplicate source_id `{}`",
                    self.name, s.source_id
                )));
            }
        }
        Ok(())
    }

    pub fn check_paths(&self) -> Result<()> {
        match self.samples.iter().find(|s| !s.path.exists()) {
            Some(s) => Err(HarnessError::Io {
                path: s.path.display().to_string(),
                reason: format!("sample `{}` not found", s.source_id),
            }),
            None => Ok(()),
        }
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.samples.iter().filter_map(|s| s.subject_id.as_deref()).collect()
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes()];
        for s in &self.samples {
            h[s.label] += 1;
        }
        h
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
    }

    /// Reads, resolves relative sample paths and validates; sample files must
    /// exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut m: DatasetManifest = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
            file: path.display().to_string(),
            json_path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut m.samples {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        m.validate()?;
        m.check_paths()?;
        Ok(m)
    }
}

/// Fails when any subject appears in both manifests.
pub fn check_subject_disjoint(train: &DatasetManifest, test: &DatasetManifest) -> Result<()> {
    let overlap: Vec<String> = train
        .subjects()
        .intersection(&test.subjects())
        .map(|s| s.to_string())
        .collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::SubjectOverlap(overlap))
    }
}

/// Reads an `.aedat` recording or a canonical event file.
pub fn read_event_file(path: &Path) -> std::result::Result<EventStream, EventsError> {
    let is_aedat = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("aedat"));
    if is_aedat {
        let bytes = fs::read(path).map_err(|e| EventsError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(parse_aedat(&bytes)?.stream)
    } else {
        read_canonical_file(path)
    }
}

fn sample_error(s: &ManifestSample, reason: impl ToString) -> HarnessError {
    HarnessError::Sample {
        source_id: s.source_id.clone(),
        reason: reason.to_string(),
    }
}

/// Event streams for every event sample, segments sliced out and re-based.
/// Each file is read once even when several segments share it.
pub fn load_streams(samples: &[ManifestSample]) -> Result<Vec<EventStream>> {
    let mut files: HashMap<&Path, EventStream> = HashMap::new();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        if s.kind != SampleKind::Events {
            return Err(sample_error(s, "not an event sample"));
        }
        if !files.contains_key(s.path.as_path()) {
            let stream = read_event_file(&s.path).map_err(|e| sample_error(s, e))?;
            files.insert(s.path.as_path(), stream);
        }
        let full = &files[s.path.as_path()];
        let stream = match s.segment {
            Some(seg) => slice_stream(full, seg.start_usec, seg.end_usec).map_err(|e| sample_error(s, e))?,
            None => full.clone(),
        };
        out.push(stream);
    }
    Ok(out)
}

/// Deterministically encoded video of one sample.
pub fn load_video<T: Scalar>(
    sample: &ManifestSample,
    stream: Option<&EventStream>,
    encoder: &EncoderConfig,
) -> Result<Video<T>> {
    let video = match sample.kind {
        SampleKind::Frames => load_frames_dir(&sample.path).map_err(|e| sample_error(sample, e))?,
        SampleKind::Events => {
            let owned;
            let stream = match stream {
                Some(s) => s,
                None => {
                    owned = load_streams(std::slice::from_ref(sample))?.remove(0);
                    &owned
                }
            };
            encode_frames(stream, encoder).map_err(|e| sample_error(sample, e))?
        }
    };
    Ok(video.labelled(sample.source_id.clone(), sample.label))
}
