//! DVS Gesture layout: `<trial>.aedat` recordings, `<trial>_labels.csv`
//! segment tables and the split listings `trials_to_train.txt` /
//! `trials_to_test.txt` (one `.aedat` file name per line). Trial names start
//! with the subject id, e.g. `user07_fluorescent`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{check_subject_disjoint, DatasetManifest, ManifestSample, SampleKind, Split};
use super::{HarnessError, Result};
use crate::events_io::parse_gesture_labels;

pub const DVS_CLASS_NAMES: [&str; 11] = [
    "hand_clapping",
    "right_hand_wave",
    "left_hand_wave",
    "right_arm_clockwise",
    "right_arm_counter_clockwise",
    "left_arm_clockwise",
    "left_arm_counter_clockwise",
    "arm_roll",
    "air_drums",
    "air_guitar",
    "other_gestures",
];

/// 1-based class id of the background ("other gestures") class.
pub const BACKGROUND_CLASS_ID: u32 = 11;

/// Highest subject number of the default training split.
pub const DEFAULT_LAST_TRAIN_SUBJECT: u32 = 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DvsProtocol {
    /// Background class removed.
    #[serde(rename = "10_class")]
    TenClass,
    #[serde(rename = "11_class")]
    ElevenClass,
}

impl DvsProtocol {
    pub fn class_names(self) -> Vec<String> {
        let n = match self {
            Self::TenClass => 10,
            Self::ElevenClass => 11,
        };
        DVS_CLASS_NAMES[..n].iter().map(|s| s.to_string()).collect()
    }
}

pub fn subject_of(trial: &str) -> &str {
    trial.split('_').next().unwrap_or(trial)
}

fn read_listing(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let name = l.rsplit(['/', '\\']).next().unwrap_or(l);
            name.trim_end_matches(".aedat").to_string()
        })
        .collect())
}

/// Split by subject number when no listing files ship with the data.
fn default_listing(root: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let mut trials: Vec<String> = fs::read_dir(root)
        .map_err(|e| HarnessError::io(root, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_suffix(".aedat").map(str::to_string)
        })
        .collect();
    trials.sort();
    let number = |t: &str| -> Option<u32> { subject_of(t).trim_start_matches("user").parse().ok() };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for t in trials {
        match number(&t) {
            Some(k) if k <= DEFAULT_LAST_TRAIN_SUBJECT => train.push(t),
            Some(_) => test.push(t),
            None => {
                return Err(HarnessError::Manifest(format!(
                    "cannot infer subject number of trial `{t}`"
                )))
            }
        }
    }
    Ok((train, test))
}

fn build_split(root: &Path, trials: &[String], protocol: DvsProtocol, split: Split) -> Result<DatasetManifest> {
    let mut samples = Vec::new();
    for trial in trials {
        let aedat = root.join(format!("{trial}.aedat"));
        let labels_path = root.join(format!("{trial}_labels.csv"));
        if !labels_path.exists() {
            return Err(HarnessError::MissingLabels(labels_path.display().to_string()));
        }
        if !aedat.exists() {
            return Err(HarnessError::Io {
                path: aedat.display().to_string(),
                reason: "listed trial not found".into(),
            });
        }
        let text = fs::read_to_string(&labels_path).map_err(|e| HarnessError::io(&labels_path, e))?;
        let segments = parse_gesture_labels(&text).map_err(|e| HarnessError::Sample {
            source_id: trial.clone(),
            reason: e.to_string(),
        })?;
        for (i, seg) in segments.into_iter().enumerate() {
            if seg.class_id == 0 || seg.class_id as usize > DVS_CLASS_NAMES.len() {
                return Err(HarnessError::Sample {
                    source_id: trial.clone(),
                    reason: format!("class id {} outside 1..=11", seg.class_id),
                });
            }
            if protocol == DvsProtocol::TenClass && seg.class_id == BACKGROUND_CLASS_ID {
                continue;
            }
            samples.push(ManifestSample {
                source_id: format!("{trial}#{i}"),
                path: aedat.clone(),
                kind: SampleKind::Events,
                label: seg.class_id as usize - 1,
                segment: Some(seg),
                subject_id: Some(subject_of(trial).to_string()),
            });
        }
    }
    let m = DatasetManifest {
        name: format!(
            "dvs_gesture_{}_{}",
            match protocol {
                DvsProtocol::TenClass => "10",
                DvsProtocol::ElevenClass => "11",
            },
            match split {
                Split::Train => "train",
                Split::Test => "test",
            }
        ),
        class_names: protocol.class_names(),
        split,
        samples,
    };
    m.validate()?;
    Ok(m)
}

/// Train and test manifests, one sample per labelled gesture segment.
pub fn build_dvs_manifest(root: &Path, protocol: DvsProtocol) -> Result<(DatasetManifest, DatasetManifest)> {
    let train_list: PathBuf = root.join("trials_to_train.txt");
    let test_list: PathBuf = root.join("trials_to_test.txt");
    let (train_trials, test_trials) = if train_list.exists() || test_list.exists() {
        (read_listing(&train_list)?, read_listing(&test_list)?)
    } else {
        default_listing(root)?
    };
    let dup: BTreeSet<&String> = train_trials.iter().filter(|t| test_trials.contains(t)).collect();
    if let Some(t) = dup.into_iter().next() {
        return Err(HarnessError::Manifest(format!("trial `{t}` listed in both splits")));
    }
    let train = build_split(root, &train_trials, protocol, Split::Train)?;
    let test = build_split(root, &test_trials, protocol, Split::Test)?;
    check_subject_disjoint(&train, &test)?;
    Ok((train, test))
}
