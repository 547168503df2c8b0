//! Batch commands: build a dataset from `**kern` sources, train, transcribe
//! audio and evaluate a checkpoint.
//!
//! Every random choice draws from a stream seeded by the run seed and a
//! fixed tag plus indices (source, fragment, epoch, sample), so outputs do
//! not depend on how many draws earlier steps happened to make.

mod build;
mod config;
mod data;
mod infer;
mod manifest;
mod train;

use std::path::{Path, PathBuf};

pub use build::{cmd_build, BuildReport};
pub use config::{FragmentSection, ModelSection, RunConfig, SplitFractions, TrainSection, VoiceSection};
pub use infer::{cmd_evaluate, cmd_transcribe, EvaluateOutcome, Transcription};
pub use manifest::{tokens_from_text, tokens_to_text, Manifest, ManifestRecord, Split};
pub use train::{cmd_train, EpochLog, TrainReport, BEST_CHECKPOINT, LAST_CHECKPOINT, TRAIN_LOG};

use crate::net::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("model: {0}")]
    Model(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 1 usage or config, 2 data (including
    /// unreadable checkpoints), 3 model or decoding.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Io { .. } | PipelineError::Data(_) | PipelineError::Checkpoint(_) => 2,
            PipelineError::Model(_) => 3,
        }
    }
}

/// Exit status of a transcription whose output is not a valid score.
pub const EXIT_UNDECODABLE: i32 = 3;

/// Tags separating the random streams of a run.
pub(crate) mod stream {
    pub const SPLIT: u64 = 1;
    pub const FRAGMENT: u64 = 2;
    pub const TEMPO: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const DROPOUT: u64 = 6;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an independent stream identified by `parts`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}
