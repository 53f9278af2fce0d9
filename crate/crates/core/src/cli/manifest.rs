use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{Mode, SpeakerEmbedding, EMBEDDING_MAGIC};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub utterance_id: String,
    #[serde(default)]
    pub speaker_id: String,
    #[serde(default)]
    pub language: String,
}

/// JSONL manifest. Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

fn check_id(id: &str) -> Result<()> {
    let bad = id.is_empty()
        || id.starts_with('.')
        || id.contains(['/', '\\'])
        || id.chars().any(char::is_control);
    if bad {
        return Err(Error::Manifest(format!("utterance_id `{id}` is not a safe file stem")));
    }
    Ok(())
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut r: ManifestRecord = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))?;
            check_id(&r.utterance_id)?;
            if !seen.insert(r.utterance_id.clone()) {
                return Err(Error::Manifest(format!(
                    "duplicate utterance_id `{}`",
                    r.utterance_id
                )));
            }
            if r.path.is_relative() {
                r.path = base.join(&r.path);
            }
            records.push(r);
        }
        if records.is_empty() {
            return Err(Error::Manifest("manifest has no records".into()));
        }
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub language: String,
    /// Embedding file, relative to the index.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub utterance_id: String,
    pub error: String,
}

/// `index.json` written next to the embedding files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    pub mode: Mode,
    pub config_hash: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub entries: Vec<IndexEntry>,
    pub failures: Vec<Failure>,
}

impl EmbeddingIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Vector from either embedding encoding, told apart by the magic prefix.
pub fn read_embedding_vector(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        SpeakerEmbedding::vector_from_bytes(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        Ok(SpeakerEmbedding::from_json(text)?.vector)
    }
}
