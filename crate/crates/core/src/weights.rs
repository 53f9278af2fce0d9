//! Named parameter tensors: seeded initialization, strict validation against a model
//! config, and the `AGVW0001` weight-file format.
//!
//! File layout (little-endian):
//!
//! ```text
//! "AGVW0001" | u32 header_len | header_len bytes of JSON | f32 payload
//! ```
//!
//! The JSON header lists every tensor (name, shape, dtype) in payload order together
//! with the total payload size and the store metadata. Tensors are stored in sorted
//! name order, so saving the same store always produces the same bytes.
//!
//! Initialization draws each tensor from its own ChaCha20 stream keyed by
//! `SHA-256("agv-init" ‖ seed ‖ name)`, so values do not depend on insertion order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"AGVW0001";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Xavier { fan_in: usize, fan_out: usize },
    Zeros,
    Normal { std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Weight `in × out` and zero bias.
pub fn linear_specs(prefix: &str, n_in: usize, n_out: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec {
            name: format!("{prefix}.weight"),
            shape: vec![n_in, n_out],
            init: Init::Xavier {
                fan_in: n_in,
                fan_out: n_out,
            },
        },
        ParamSpec {
            name: format!("{prefix}.bias"),
            shape: vec![n_out],
            init: Init::Zeros,
        },
    ]
}

/// Kernels `c_out × c_in × k` (fans counted over taps) and zero bias.
pub fn conv_specs(prefix: &str, c_out: usize, c_in: usize, k: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec {
            name: format!("{prefix}.weight"),
            shape: vec![c_out, c_in, k],
            init: Init::Xavier {
                fan_in: c_in * k,
                fan_out: c_out * k,
            },
        },
        ParamSpec {
            name: format!("{prefix}.bias"),
            shape: vec![c_out],
            init: Init::Zeros,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub seed: u64,
    pub config_digest: String,
    pub format_version: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
    pub meta: ParamMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSummary {
    pub name: String,
    pub shape: Vec<usize>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

fn stream_for(seed: u64, name: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"agv-init");
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

fn draw(spec: &ParamSpec, seed: u64) -> Result<Tensor> {
    let n: usize = spec.shape.iter().product();
    let data = match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Xavier { fan_in, fan_out } => {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new(-a, a);
            let mut rng = stream_for(seed, &spec.name);
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
        Init::Normal { std } => {
            let dist = Normal::new(0.0, std)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", spec.name)))?;
            let mut rng = stream_for(seed, &spec.name);
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
    };
    Tensor::new(spec.shape.clone(), data)
}

/// Seeded, order-independent initialization of every parameter the config needs.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut entries = BTreeMap::new();
    for spec in cfg.param_specs() {
        let t = draw(&spec, seed)?;
        if entries.insert(spec.name.clone(), t).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate parameter {}", spec.name)));
        }
    }
    Ok(ParamStore {
        entries,
        meta: ParamMeta {
            seed,
            config_digest: cfg.digest_hex(),
            format_version: FORMAT_VERSION,
        },
    })
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    format_version: u32,
    meta: ParamMeta,
    payload_bytes: usize,
    tensors: Vec<TensorHeader>,
}

impl ParamStore {
    pub fn from_entries(entries: BTreeMap<String, Tensor>, meta: ParamMeta) -> Self {
        Self { entries, meta }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_parameters(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Exact name and shape agreement with what `cfg` requires.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let specs = cfg.param_specs();
        let wanted: BTreeSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        for spec in &specs {
            let t = self.get(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::shape(format!(
                    "{}: stored {:?}, config needs {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
        }
        let extra: Vec<String> = self
            .entries
            .keys()
            .filter(|k| !wanted.contains(k.as_str()))
            .cloned()
            .collect();
        if !extra.is_empty() {
            return Err(Error::UnexpectedParameters(extra));
        }
        Ok(())
    }

    pub fn summary(&self) -> Vec<TensorSummary> {
        self.entries
            .iter()
            .map(|(name, t)| {
                let d = t.data();
                TensorSummary {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    min: d.iter().copied().fold(f64::INFINITY, f64::min),
                    max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean: d.iter().sum::<f64>() / d.len() as f64,
                }
            })
            .collect()
    }

    /// Round every entry through `f32`, as saving and loading would.
    pub fn quantized(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, t)| (k.clone(), t.map(|v| f64::from(v as f32))))
                .collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors: Vec<TensorHeader> = self
            .entries
            .iter()
            .map(|(name, t)| TensorHeader {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
            })
            .collect();
        let payload_bytes = 4 * self.total_parameters();
        let header = serde_json::to_vec(&FileHeader {
            format_version: FORMAT_VERSION,
            meta: self.meta.clone(),
            payload_bytes,
            tensors,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + payload_bytes);
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.entries.values() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != WEIGHTS_MAGIC {
            return Err(Error::BadMagic {
                expected: "AGVW0001",
            });
        }
        let len_bytes = bytes.get(8..12).ok_or(Error::TruncatedPayload {
            expected: 12,
            found: bytes.len(),
        })?;
        let header_len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
        let header_end = 12 + header_len;
        let header_bytes = bytes.get(12..header_end).ok_or(Error::TruncatedPayload {
            expected: header_end,
            found: bytes.len(),
        })?;
        let header: FileHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| Error::HeaderMismatch(format!("unreadable header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::HeaderMismatch(format!(
                "format version {}",
                header.format_version
            )));
        }

        let mut declared = 0usize;
        for t in &header.tensors {
            if t.dtype != "f32" {
                return Err(Error::HeaderMismatch(format!("{}: dtype {}", t.name, t.dtype)));
            }
            if t.shape.is_empty() || t.shape.contains(&0) {
                return Err(Error::HeaderMismatch(format!("{}: shape {:?}", t.name, t.shape)));
            }
            declared += 4 * t.shape.iter().product::<usize>();
        }
        if declared != header.payload_bytes {
            return Err(Error::HeaderMismatch(format!(
                "tensor shapes account for {declared} bytes, header declares {}",
                header.payload_bytes
            )));
        }
        let payload = &bytes[header_end..];
        if payload.len() < header.payload_bytes {
            return Err(Error::TruncatedPayload {
                expected: header.payload_bytes,
                found: payload.len(),
            });
        }
        if payload.len() > header.payload_bytes {
            return Err(Error::HeaderMismatch(format!(
                "{} trailing bytes after payload",
                payload.len() - header.payload_bytes
            )));
        }

        let mut entries = BTreeMap::new();
        let mut offset = 0;
        for t in header.tensors {
            let n: usize = t.shape.iter().product();
            let data = payload[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect();
            offset += 4 * n;
            let tensor = Tensor::new(t.shape, data)?;
            if entries.insert(t.name.clone(), tensor).is_some() {
                return Err(Error::HeaderMismatch(format!("duplicate tensor {}", t.name)));
            }
        }
        Ok(Self {
            entries,
            meta: header.meta,
        })
    }

    /// Write through a temporary file and rename into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::util::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
