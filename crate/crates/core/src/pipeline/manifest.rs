use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::codec::Symbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(PipelineError::Config(format!("unknown split `{s}`"))),
        }
    }
}

/// One line of the manifest. Paths are relative to the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub audio: PathBuf,
    pub tokens: PathBuf,
    pub duration_seconds: f64,
    pub split: Split,
    /// Source score file name.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    /// Directory the record paths are relative to.
    pub root: PathBuf,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str, root: &Path) -> Result<Self, PipelineError> {
        let mut records = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(line)
                .map_err(|e| PipelineError::Data(format!("manifest line {}: {e}", i + 1)))?;
            if !ids.insert(record.id.clone()) {
                return Err(PipelineError::Data(format!(
                    "manifest line {}: duplicate id `{}`",
                    i + 1,
                    record.id
                )));
            }
            records.push(record);
        }
        Ok(Manifest {
            records,
            root: root.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Manifest::from_jsonl(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| PipelineError::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }
}

/// Token file text: one escaped symbol per line.
pub fn tokens_to_text(symbols: &[Symbol]) -> String {
    symbols.iter().map(|s| s.escaped() + "\n").collect()
}

pub fn tokens_from_text(text: &str) -> Result<Vec<Symbol>, PipelineError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.parse()
                .map_err(|e| PipelineError::Data(format!("token line {}: {e}", i + 1)))
        })
        .collect()
}
