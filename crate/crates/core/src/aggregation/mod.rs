//! Multi-level attention aggregation.
//!
//! The backbone frame states `H_SV` are first prompted with one cue (F0 or mel) through
//! cross-attention and optionally probed again with the other cue. The result is fused
//! with a bank of learned tokens through multi-head attention:
//!
//! ```text
//! H_CA1 = softmax(q(H_SV)·k(H_A)ᵀ / s) · v(H_A)
//! H_CA2 = softmax(q(H_B)·k(H_CA1)ᵀ / s) · v(H_CA1)
//! e     = MHA(mean_t(H_CA2), tokens, tokens)
//! ```

mod embedding;
mod grad;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use embedding::{SpeakerEmbedding, EMBEDDING_MAGIC};
pub use grad::{check_tail, tail_gradients, tail_param_names, TailInputs};

use crate::backbone::{load_conv, load_linear};
use crate::dsp::{F0Contour, MelSpectrogram};
use crate::error::{Error, Result};
use crate::nn::{
    relu, scaled_dot_attention, AttentionTrace, GluConv, Linear, MhaForward, MultiHeadAttention,
    ScaleMode, Tensor,
};
use crate::weights::{conv_specs, linear_specs, Init, ParamSpec, ParamStore};

/// Which cues are aggregated, and in which order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Mode {
    /// Backbone pooled vector only.
    #[serde(rename = "se")]
    Se,
    #[serde(rename = "se+f0")]
    SeF0,
    #[serde(rename = "se+me")]
    SeMe,
    /// F0 prompting first, mel probing second.
    #[default]
    #[serde(rename = "se+f0+me")]
    SeF0ThenMe,
    #[serde(rename = "se+me+f0")]
    SeMeThenF0,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Se,
        Mode::SeF0,
        Mode::SeMe,
        Mode::SeF0ThenMe,
        Mode::SeMeThenF0,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Se => "se",
            Mode::SeF0 => "se+f0",
            Mode::SeMe => "se+me",
            Mode::SeF0ThenMe => "se+f0+me",
            Mode::SeMeThenF0 => "se+me+f0",
        }
    }

    pub fn uses_f0(self) -> bool {
        matches!(self, Mode::SeF0 | Mode::SeF0ThenMe | Mode::SeMeThenF0)
    }

    pub fn uses_mel(self) -> bool {
        matches!(self, Mode::SeMe | Mode::SeF0ThenMe | Mode::SeMeThenF0)
    }

    pub fn levels(self) -> usize {
        match self {
            Mode::Se => 0,
            Mode::SeF0 | Mode::SeMe => 1,
            Mode::SeF0ThenMe | Mode::SeMeThenF0 => 2,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub mode: Mode,
    pub splitting: bool,
    pub n_tokens: usize,
    pub heads: usize,
    pub scale_mode: ScaleMode,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            mode: Mode::SeF0ThenMe,
            splitting: true,
            n_tokens: 8,
            heads: 4,
            scale_mode: ScaleMode::Sqrt,
        }
    }
}

impl AggregationConfig {
    pub fn uses_fusion(&self) -> bool {
        self.splitting && self.mode != Mode::Se
    }

    pub fn validate(&self, d_model: usize) -> Result<()> {
        if self.uses_fusion() {
            if self.n_tokens == 0 {
                return Err(Error::InvalidConfig("token bank must be non-empty".into()));
            }
            if self.heads == 0 || !d_model.is_multiple_of(self.heads) {
                return Err(Error::IndivisibleHeads {
                    d: d_model,
                    heads: self.heads,
                });
            }
        }
        Ok(())
    }

    pub fn param_specs(&self, d: usize, n_mels: usize) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        if self.mode.uses_f0() {
            specs.extend(linear_specs("agg.f0_enc.fc1", 2, d));
            specs.extend(linear_specs("agg.f0_enc.fc2", d, d));
        }
        if self.mode.uses_mel() {
            specs.extend(linear_specs("agg.mel_enc.fc1", n_mels, d));
            specs.extend(linear_specs("agg.mel_enc.fc2", d, d));
            specs.extend(conv_specs("agg.mel_enc.glu", 2 * d, d, 3));
        }
        for level in 1..=self.mode.levels() {
            for proj in ["q", "k", "v"] {
                specs.extend(linear_specs(&format!("agg.level{level}.{proj}"), d, d));
            }
        }
        if self.uses_fusion() {
            specs.push(ParamSpec {
                name: "agg.tokens".into(),
                shape: vec![self.n_tokens, d],
                init: Init::Normal {
                    std: 1.0 / (d as f64).sqrt(),
                },
            });
            for proj in ["q", "k", "v", "o"] {
                specs.extend(linear_specs(&format!("agg.fuse.{proj}"), d, d));
            }
        }
        specs
    }
}

/// Per-frame `(ln(f0/100), 1)` for voiced frames and `(0, 0)` otherwise.
pub fn f0_features(contour: &F0Contour) -> Result<Tensor> {
    if contour.is_empty() {
        return Err(Error::EmptyContour);
    }
    let data = contour
        .frames
        .iter()
        .flat_map(|f| {
            if f.voiced {
                [(f.f0_hz / 100.0).ln(), 1.0]
            } else {
                [0.0, 0.0]
            }
        })
        .collect();
    Tensor::matrix(contour.len(), 2, data)
}

/// Two-layer MLP over per-frame F0 features, giving `H_F0`.
#[derive(Debug, Clone)]
pub struct F0Encoder {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl F0Encoder {
    pub fn forward(&self, contour: &F0Contour) -> Result<Tensor> {
        let x = f0_features(contour)?;
        self.fc2.forward(&relu(&self.fc1.forward(&x)?))
    }
}

/// Two fully connected layers and a gated convolution over log-mel frames, giving `H_ME`.
#[derive(Debug, Clone)]
pub struct MelEncoder {
    pub fc1: Linear,
    pub fc2: Linear,
    pub glu: GluConv,
}

impl MelEncoder {
    pub fn forward(&self, mel: &Tensor) -> Result<Tensor> {
        let h = relu(&self.fc1.forward(mel)?);
        let h = relu(&self.fc2.forward(&h)?);
        self.glu.forward(&h)
    }
}

/// One cross-attention level: queries from one stream, keys/values from another.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub scale_mode: ScaleMode,
}

#[derive(Debug, Clone)]
pub struct CrossAttentionOutput {
    pub trace: AttentionTrace,
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
}

impl CrossAttentionOutput {
    pub fn output(&self) -> &Tensor {
        &self.trace.output
    }
}

impl CrossAttention {
    /// No residual connection around the attention.
    pub fn forward(&self, query_states: &Tensor, kv_states: &Tensor) -> Result<CrossAttentionOutput> {
        let q = self.q.forward(query_states)?;
        let k = self.k.forward(kv_states)?;
        let v = self.v.forward(kv_states)?;
        let trace = scaled_dot_attention(&q, &k, &v, self.scale_mode)?;
        Ok(CrossAttentionOutput { trace, q, k, v })
    }
}

/// Learned token bank weighted by multi-head attention from the pooled state.
#[derive(Debug, Clone)]
pub struct TokenFusion {
    pub tokens: Tensor,
    pub mha: MultiHeadAttention,
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub query: Tensor,
    pub attention: MhaForward,
}

impl TokenFusion {
    pub fn forward(&self, h: &Tensor) -> Result<FusionOutput> {
        let query = h.mean_rows();
        if query.cols() != self.tokens.cols() {
            return Err(Error::shape(format!(
                "fusion query width {} vs tokens {}",
                query.cols(),
                self.tokens.cols()
            )));
        }
        let attention = self.mha.forward(&query, &self.tokens, &self.tokens)?;
        Ok(FusionOutput { query, attention })
    }

    /// The fused `d_model` vector.
    pub fn split_and_fuse(&self, h: &Tensor) -> Result<Tensor> {
        let out = self.forward(h)?.attention.output;
        let d = out.cols();
        out.reshape(vec![d])
    }
}

/// All aggregation parameters needed by one config.
#[derive(Debug, Clone)]
pub struct Aggregator {
    pub cfg: AggregationConfig,
    pub f0_encoder: Option<F0Encoder>,
    pub mel_encoder: Option<MelEncoder>,
    pub level1: Option<CrossAttention>,
    pub level2: Option<CrossAttention>,
    pub fusion: Option<TokenFusion>,
}

/// Intermediate states of one aggregation pass.
#[derive(Debug, Clone)]
pub struct AggregationTrace {
    pub h_f0: Option<Tensor>,
    pub h_me: Option<Tensor>,
    pub level1: Option<CrossAttentionOutput>,
    pub level2: Option<CrossAttentionOutput>,
    pub fusion: Option<FusionOutput>,
    pub vector: Tensor,
}

fn load_cross(store: &ParamStore, level: usize, scale_mode: ScaleMode) -> Result<CrossAttention> {
    let p = format!("agg.level{level}");
    Ok(CrossAttention {
        q: load_linear(store, &format!("{p}.q"))?,
        k: load_linear(store, &format!("{p}.k"))?,
        v: load_linear(store, &format!("{p}.v"))?,
        scale_mode,
    })
}

impl Aggregator {
    pub fn from_store(store: &ParamStore, cfg: &AggregationConfig) -> Result<Self> {
        let mode = cfg.mode;
        let f0_encoder = mode
            .uses_f0()
            .then(|| {
                Ok::<_, Error>(F0Encoder {
                    fc1: load_linear(store, "agg.f0_enc.fc1")?,
                    fc2: load_linear(store, "agg.f0_enc.fc2")?,
                })
            })
            .transpose()?;
        let mel_encoder = mode
            .uses_mel()
            .then(|| {
                Ok::<_, Error>(MelEncoder {
                    fc1: load_linear(store, "agg.mel_enc.fc1")?,
                    fc2: load_linear(store, "agg.mel_enc.fc2")?,
                    glu: GluConv::new(load_conv(store, "agg.mel_enc.glu", 1)?)?,
                })
            })
            .transpose()?;
        let level1 = (mode.levels() >= 1)
            .then(|| load_cross(store, 1, cfg.scale_mode))
            .transpose()?;
        let level2 = (mode.levels() >= 2)
            .then(|| load_cross(store, 2, cfg.scale_mode))
            .transpose()?;
        let fusion = cfg
            .uses_fusion()
            .then(|| {
                Ok::<_, Error>(TokenFusion {
                    tokens: store.get("agg.tokens")?.clone(),
                    mha: MultiHeadAttention::new(
                        cfg.heads,
                        load_linear(store, "agg.fuse.q")?,
                        load_linear(store, "agg.fuse.k")?,
                        load_linear(store, "agg.fuse.v")?,
                        load_linear(store, "agg.fuse.o")?,
                    )?,
                })
            })
            .transpose()?;
        Ok(Self {
            cfg: cfg.clone(),
            f0_encoder,
            mel_encoder,
            level1,
            level2,
            fusion,
        })
    }

    /// Encode the cues and run the configured attention levels and fusion.
    ///
    /// `frame_states` is `H_SV`; `pooled` is returned unchanged in `Mode::Se`. All streams
    /// are truncated to the shortest frame count.
    pub fn forward(
        &self,
        frame_states: &Tensor,
        pooled: &Tensor,
        mel: &MelSpectrogram,
        f0: &F0Contour,
    ) -> Result<AggregationTrace> {
        let mode = self.cfg.mode;
        if mode == Mode::Se {
            return Ok(AggregationTrace {
                h_f0: None,
                h_me: None,
                level1: None,
                level2: None,
                fusion: None,
                vector: pooled.clone(),
            });
        }
        let mut t = frame_states.rows();
        if mode.uses_f0() {
            t = t.min(f0.len());
        }
        if mode.uses_mel() {
            t = t.min(mel.n_frames());
        }
        if t == 0 {
            return Err(Error::EmptyContour);
        }
        let h_sv = frame_states.take_rows(t)?;
        let h_f0 = match &self.f0_encoder {
            Some(enc) => Some(enc.forward(&f0.truncated(t))?),
            None => None,
        };
        let h_me = match &self.mel_encoder {
            Some(enc) => Some(enc.forward(&mel.frames.take_rows(t)?)?),
            None => None,
        };
        let tail = self.tail(&TailInputs {
            h_sv,
            h_f0: h_f0.clone(),
            h_me: h_me.clone(),
        })?;
        Ok(AggregationTrace {
            h_f0,
            h_me,
            level1: Some(tail.level1),
            level2: tail.level2,
            fusion: tail.fusion,
            vector: tail.vector,
        })
    }
}
