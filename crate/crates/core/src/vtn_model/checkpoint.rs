//! Tensor archive used for model and training checkpoints.
//!
//! ```text
//! magic      8 bytes  "ETCKPT01"
//! meta_len   u64 LE
//! meta       meta_len bytes of UTF-8 JSON (contains "model_config")
//! count      u32 LE
//! count x tensor record:
//!   name_len u16 LE | name UTF-8 | dtype u8 (0 f32, 1 f64) | ndim u8 |
//!   ndim x u64 LE dims | product(dims) little-endian elements
//! ```

use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{ModelConfig, ModelError, ModelParams, Result};
use crate::nn::Tensor;
use crate::scalar::{DType, Scalar};

const MAGIC: &[u8; 8] = b"ETCKPT01";
const PARAM_PREFIX: &str = "params/";

/// Tensor as stored, before conversion to a scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl RawTensor {
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(&self.shape, self.values.iter().map(|&v| T::from_f64c(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub meta: Value,
    pub tensors: Vec<RawTensor>,
}

fn archive_err(reason: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(reason.into())
}

pub fn encode_archive<T: Scalar>(meta: &Value, tensors: &[(String, &Tensor<T>)]) -> Result<Vec<u8>> {
    let meta_bytes = serde_json::to_vec(meta).map_err(|e| archive_err(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let nb = name.as_bytes();
        if nb.len() > u16::MAX as usize || t.shape.len() > u8::MAX as usize {
            return Err(archive_err(format!("tensor `{name}` name or rank too large")));
        }
        out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        out.extend_from_slice(nb);
        out.push(T::DTYPE.tag());
        out.push(t.shape.len() as u8);
        for &dim in &t.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in &t.data {
            match T::DTYPE {
                DType::F32 => out.extend_from_slice(&(v.to_f64c() as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.to_f64c().to_le_bytes()),
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(archive_err(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_archive(bytes: &[u8]) -> Result<Archive> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(archive_err("bad magic"));
    }
    let meta_len = r.u64()? as usize;
    let meta: Value = serde_json::from_slice(r.take(meta_len)?).map_err(|e| archive_err(e.to_string()))?;
    let count = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name =
            String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| archive_err("tensor name is not UTF-8"))?;
        let head = r.take(2)?;
        let dtype =
            DType::from_tag(head[0]).ok_or_else(|| archive_err(format!("`{name}`: unknown dtype {}", head[0])))?;
        let ndim = head[1] as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| archive_err(format!("`{name}`: shape overflows")))?;
        let raw = r.take(
            numel
                .checked_mul(dtype.size())
                .ok_or_else(|| archive_err("size overflow"))?,
        )?;
        let values = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect(),
            DType::F64 => raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect(),
        };
        tensors.push(RawTensor {
            name,
            dtype,
            shape,
            values,
        });
    }
    if r.pos != bytes.len() {
        return Err(archive_err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Archive { meta, tensors })
}

pub fn read_archive(path: &Path) -> Result<Archive> {
    let bytes = fs::read(path).map_err(|e| archive_err(format!("{}: {e}", path.display())))?;
    decode_archive(&bytes)
}

pub fn write_archive(path: &Path, bytes: &[u8]) -> Result<()> {
    // Write-then-rename so an interrupted save never clobbers the last good file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| archive_err(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| archive_err(format!("{}: {e}", path.display())))
}

/// Named parameter tensors under `prefix`, each shape checked against the
/// layout `config` implies. Missing, extra or mis-shaped tensors are errors.
pub fn params_from_archive<T: Scalar>(archive: &Archive, config: &ModelConfig, prefix: &str) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut params = ModelParams::<T>::zeros(config);
    let mut expected: Vec<(String, &mut Tensor<T>)> = params.named_mut();
    let mut seen = 0;
    for raw in archive.tensors.iter().filter(|t| t.name.starts_with(prefix)) {
        let short = &raw.name[prefix.len()..];
        let slot = expected
            .iter_mut()
            .find(|(n, _)| n == short)
            .ok_or_else(|| archive_err(format!("unexpected tensor `{}`", raw.name)))?;
        if slot.1.shape != raw.shape {
            return Err(archive_err(format!(
                "`{}` has shape {:?}, config implies {:?}",
                raw.name, raw.shape, slot.1.shape
            )));
        }
        *slot.1 = raw.to_tensor();
        seen += 1;
    }
    if seen != expected.len() {
        return Err(archive_err(format!(
            "archive holds {seen} of {} `{prefix}` tensors",
            expected.len()
        )));
    }
    Ok(params)
}

pub fn model_config_from_meta(meta: &Value) -> Result<ModelConfig> {
    let cfg = meta
        .get("model_config")
        .ok_or_else(|| archive_err("metadata lacks model_config"))?;
    serde_json::from_value(cfg.clone()).map_err(|e| archive_err(format!("model_config: {e}")))
}

impl<T: Scalar> ModelParams<T> {
    pub fn tensors_with_prefix<'a>(&'a self, prefix: &str) -> Vec<(String, &'a Tensor<T>)> {
        self.named()
            .into_iter()
            .map(|(n, t)| (format!("{prefix}{n}"), t))
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::json!({ "model_config": self.config });
        encode_archive(&meta, &self.tensors_with_prefix(PARAM_PREFIX))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let archive = decode_archive(bytes)?;
        let config = model_config_from_meta(&archive.meta)?;
        params_from_archive(&archive, &config, PARAM_PREFIX)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_archive(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let archive = read_archive(path)?;
        let config = model_config_from_meta(&archive.meta)?;
        params_from_archive(&archive, &config, PARAM_PREFIX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32_and_cross_dtype() {
        let p = ModelParams::<f32>::init(&ModelConfig::tiny(), 3);
        let bytes = p.to_bytes().unwrap();
        assert_eq!(ModelParams::<f32>::from_bytes(&bytes).unwrap(), p);
        let wide = ModelParams::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(wide.cast::<f32>(), p);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = ModelParams::<f64>::init(&ModelConfig::tiny(), 3);
        let mut archive = decode_archive(&p.to_bytes().unwrap()).unwrap();
        let mut cfg = ModelConfig::tiny();
        cfg.num_classes = 5;
        archive.meta = serde_json::json!({ "model_config": cfg });
        assert!(matches!(
            params_from_archive::<f64>(&archive, &cfg, PARAM_PREFIX),
            Err(ModelError::Checkpoint(_))
        ));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let p = ModelParams::<f32>::init(&ModelConfig::tiny(), 3);
        let bytes = p.to_bytes().unwrap();
        assert!(ModelParams::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelParams::<f32>::from_bytes(&extra).is_err());
        assert!(ModelParams::<f32>::from_bytes(b"NOTACKPT").is_err());
    }

    #[test]
    fn missing_tensor_is_rejected() {
        let p = ModelParams::<f32>::init(&ModelConfig::tiny(), 3);
        let mut archive = decode_archive(&p.to_bytes().unwrap()).unwrap();
        archive.tensors.pop();
        assert!(params_from_archive::<f32>(&archive, &p.config, PARAM_PREFIX).is_err());
    }
}
