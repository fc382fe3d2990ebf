use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestSample, SampleKind, Split};
use super::{HarnessError, Result};
use crate::events_io::{synth_stream, write_canonical_file, Pattern, SynthParams};
use crate::frames::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub patterns: Vec<Pattern>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub params: SynthParams,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            patterns: Pattern::ALL.to_vec(),
            train_per_class: 8,
            test_per_class: 4,
            params: SynthParams::default(),
        }
    }
}

fn write_split(root: &Path, spec: &SynthSpec, seed: u64, split: Split) -> Result<DatasetManifest> {
    let (dir, count) = match split {
        Split::Train => ("train", spec.train_per_class),
        Split::Test => ("test", spec.test_per_class),
    };
    let out_dir = root.join(dir);
    fs::create_dir_all(&out_dir).map_err(|e| HarnessError::io(&out_dir, e))?;
    let mut samples = Vec::new();
    for (label, &pattern) in spec.patterns.iter().enumerate() {
        for i in 0..count {
            let source_id = format!("{dir}/{}_{i:03}", pattern.name());
            let (stream, _) = synth_stream(pattern, &spec.params, derive_seed(seed, &source_id))?;
            let rel = PathBuf::from(format!("{source_id}.evt"));
            write_canonical_file(&root.join(&rel), &stream)?;
            samples.push(ManifestSample {
                source_id,
                path: rel,
                kind: SampleKind::Events,
                label,
                segment: None,
                subject_id: None,
            });
        }
    }
    Ok(DatasetManifest {
        name: format!("synth_{dir}"),
        class_names: spec.patterns.iter().map(|p| p.name().to_string()).collect(),
        split,
        samples,
    })
}

/// Writes `<root>/{train,test}/*.evt` plus `train.json` and `test.json`
/// (paths relative to `root`) and returns both manifests with paths resolved.
pub fn build_synth_manifest(root: &Path, spec: &SynthSpec, seed: u64) -> Result<(DatasetManifest, DatasetManifest)> {
    if spec.patterns.is_empty() || spec.train_per_class == 0 || spec.test_per_class == 0 {
        return Err(HarnessError::Manifest(
            "every class needs at least one train and one test sample".into(),
        ));
    }
    let mut seen = spec.patterns.clone();
    seen.sort_by_key(|p| p.index());
    seen.dedup();
    if seen.len() != spec.patterns.len() {
        return Err(HarnessError::Manifest("patterns must be distinct".into()));
    }
    let mut out = Vec::new();
    for split in [Split::Train, Split::Test] {
        let m = write_split(root, spec, seed, split)?;
        let file = root.join(match split {
            Split::Train => "train.json",
            Split::Test => "test.json",
        });
        m.save(&file)?;
        out.push(DatasetManifest::load(&file)?);
    }
    let test = out.pop().expect("two manifests");
    let train = out.pop().expect("two manifests");
    Ok((train, test))
}
