//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "A2SCKPT\0"
//! version      u32
//! meta length  u32
//! meta         JSON: model config, training progress, vocabulary,
//!              tensor names and shapes
//! vocab hash   64 ASCII hex digits (SHA-256 of the vocabulary file)
//! parameters   f32 per value, trainable tensors then running statistics
//! velocity     f32 per value, one buffer per trainable tensor
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, Tensor, Velocity};
use crate::codec::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"A2SCKPT\0";
const HASH_LEN: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("vocabulary hash mismatch: expected {expected}, checkpoint has {found}")]
    VocabularyMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainProgress {
    pub seed: u64,
    pub epochs_completed: usize,
    pub best_wer: Option<f64>,
    /// 1-based epoch that produced `best_wer`.
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub progress: TrainProgress,
    pub vocabulary: Vocabulary,
    pub params: ModelParams,
    pub velocity: Velocity,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    progress: TrainProgress,
    vocabulary: String,
    tensors: Vec<TensorInfo>,
    running: Vec<TensorInfo>,
}

fn info(tensors: &[Tensor]) -> Vec<TensorInfo> {
    tensors
        .iter()
        .map(|t| TensorInfo {
            name: t.name.clone(),
            shape: t.shape.clone(),
        })
        .collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            config: self.config.clone(),
            progress: self.progress.clone(),
            vocabulary: self.vocabulary.to_file_string(),
            tensors: info(self.params.tensors()),
            running: info(self.params.running()),
        };
        let json = serde_json::to_vec(&meta).expect("checkpoint metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(self.vocabulary.hash().as_bytes());
        let values = self
            .params
            .tensors()
            .iter()
            .chain(self.params.running())
            .flat_map(|t| t.data.iter())
            .chain(self.velocity.tensors.iter().flatten());
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint; with `expected_vocab_hash` set, a checkpoint
    /// trained on another vocabulary is rejected.
    pub fn from_bytes(bytes: &[u8], expected_vocab_hash: Option<&str>) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let len = r.u32()? as usize;
        let meta: Meta = serde_json::from_slice(r.take(len)?)
            .map_err(|e| CheckpointError::Corrupt(format!("metadata: {e}")))?;
        let hash = std::str::from_utf8(r.take(HASH_LEN)?)
            .map_err(|_| CheckpointError::Corrupt("vocabulary hash is not ASCII".into()))?
            .to_string();
        let vocabulary = Vocabulary::from_file_string(&meta.vocabulary)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        if vocabulary.hash() != hash {
            return Err(CheckpointError::Corrupt("embedded vocabulary does not match its hash".into()));
        }
        if let Some(expected) = expected_vocab_hash {
            if expected != hash {
                return Err(CheckpointError::VocabularyMismatch {
                    expected: expected.to_string(),
                    found: hash,
                });
            }
        }
        let mut read = |infos: Vec<TensorInfo>| -> Result<Vec<Tensor>, CheckpointError> {
            infos
                .into_iter()
                .map(|i| {
                    let data = r.floats(i.shape.iter().product())?;
                    Ok(Tensor {
                        name: i.name,
                        shape: i.shape,
                        data,
                    })
                })
                .collect()
        };
        let tensors = read(meta.tensors)?;
        let running = read(meta.running)?;
        let params = ModelParams::from_parts(tensors, running);
        if !params.matches(&meta.config) {
            return Err(CheckpointError::Corrupt("tensor shapes do not match the model config".into()));
        }
        let velocity = Velocity {
            tensors: params
                .tensors()
                .iter()
                .map(|t| r.floats(t.len()))
                .collect::<Result<_, _>>()?,
        };
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if !params.all_finite() {
            return Err(CheckpointError::Corrupt("non-finite parameter".into()));
        }
        Ok(Checkpoint {
            config: meta.config,
            progress: meta.progress,
            vocabulary,
            params,
            velocity,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path, expected_vocab_hash: Option<&str>) -> Result<Self, CheckpointError> {
        Checkpoint::from_bytes(&std::fs::read(path)?, expected_vocab_hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Symbol;
    use crate::kern::Duration;

    fn sample() -> Checkpoint {
        let vocabulary = Vocabulary::from_symbols([Symbol::Rest, Symbol::Duration(Duration::new(4, false).unwrap())]);
        let config = ModelConfig {
            conv_filters: 2,
            hidden_units: 3,
            input_bins: 8,
            vocab_size: vocabulary.len(),
            ..Default::default()
        };
        let params = ModelParams::init(&config, 3);
        let mut velocity = Velocity::zeros_like(&params);
        velocity.tensors[0][0] = 0.5;
        Checkpoint {
            config,
            progress: TrainProgress {
                seed: 3,
                epochs_completed: 2,
                best_wer: Some(0.25),
                best_epoch: Some(1),
            },
            vocabulary,
            params,
            velocity,
        }
    }

    #[test]
    fn round_trip() {
        let ckpt = sample();
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Some(&ckpt.vocabulary.hash())).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_other_vocabulary() {
        let bytes = sample().to_bytes();
        let other = Vocabulary::from_symbols([Symbol::Rest]).hash();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes, Some(&other)),
            Err(CheckpointError::VocabularyMismatch { .. })
        ));
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], None), Err(CheckpointError::Truncated)));
        assert!(matches!(Checkpoint::from_bytes(b"garbage", None), Err(CheckpointError::BadMagic)));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra, None), Err(CheckpointError::Corrupt(_))));
        let mut version = bytes;
        version[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&version, None), Err(CheckpointError::UnsupportedVersion(9))));
    }
}
