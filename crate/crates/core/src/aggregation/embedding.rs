use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{Error, Result};

/// Magic prefix of raw embedding files: `"AGVE0001" | u32 dim | dim × f32`, little-endian.
pub const EMBEDDING_MAGIC: &[u8; 8] = b"AGVE0001";

/// Final speaker vector with the mode and config digest that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub vector: Vec<f64>,
    pub mode: Mode,
    pub config_hash: u64,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingJson {
    mode: Mode,
    d: usize,
    config_hash: String,
    values: Vec<f64>,
}

impl AsRef<[f64]> for SpeakerEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.vector
    }
}

impl SpeakerEmbedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&EmbeddingJson {
            mode: self.mode,
            d: self.dim(),
            config_hash: format!("{:016x}", self.config_hash),
            values: self.vector.clone(),
        })
        .expect("embedding serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: EmbeddingJson = serde_json::from_str(s)?;
        if j.values.len() != j.d {
            return Err(Error::DimMismatch(j.values.len(), j.d));
        }
        let config_hash = u64::from_str_radix(&j.config_hash, 16)
            .map_err(|e| Error::Manifest(format!("config_hash `{}`: {e}", j.config_hash)))?;
        Ok(Self {
            vector: j.values,
            mode: j.mode,
            config_hash,
        })
    }

    /// Raw little-endian `f32` vector behind the `AGVE0001` header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dim());
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for &v in &self.vector {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Parse a raw embedding file. The format carries no provenance.
    pub fn vector_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
        if bytes.len() < 8 || &bytes[..8] != EMBEDDING_MAGIC {
            return Err(Error::BadMagic {
                expected: "AGVE0001",
            });
        }
        let dim_bytes = bytes.get(8..12).ok_or(Error::TruncatedPayload {
            expected: 12,
            found: bytes.len(),
        })?;
        let dim = u32::from_le_bytes(dim_bytes.try_into().expect("4 bytes")) as usize;
        let payload = &bytes[12..];
        if payload.len() < 4 * dim {
            return Err(Error::TruncatedPayload {
                expected: 4 * dim,
                found: payload.len(),
            });
        }
        if payload.len() > 4 * dim {
            return Err(Error::HeaderMismatch("trailing bytes after embedding".into()));
        }
        Ok(payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    }
}
