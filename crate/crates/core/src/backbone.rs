//! ECAPA-style frame encoder: SE-Res2 blocks, multi-layer aggregation and
//! channel-dependent attentive statistics pooling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{relu, sigmoid, softmax_rows, Conv1d, Linear, Tensor};
use crate::weights::{conv_specs, linear_specs, ParamSpec, ParamStore};

/// Variance floor inside the pooled standard deviation.
pub const POOL_VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub in_dim: usize,
    pub channels: usize,
    pub scale: usize,
    pub dilations: Vec<usize>,
    pub d_model: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            in_dim: 80,
            channels: 64,
            scale: 8,
            dilations: vec![2, 3, 4],
            d_model: 192,
        }
    }
}

impl BackboneConfig {
    /// ECAPA-TDNN channel width of 512.
    pub fn full_scale() -> Self {
        Self {
            channels: 512,
            ..Self::default()
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.dilations.len()
    }

    pub fn bottleneck(&self) -> usize {
        bottleneck(self.channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 || !self.channels.is_multiple_of(self.scale) {
            return Err(Error::IndivisibleScale {
                channels: self.channels,
                scale: self.scale,
            });
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::InvalidConfig("dilations must be non-empty and positive".into()));
        }
        if self.in_dim == 0 || self.d_model == 0 {
            return Err(Error::InvalidConfig("zero-sized backbone dimension".into()));
        }
        Ok(())
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let c = self.channels;
        let w = c / self.scale;
        let b = self.bottleneck();
        let mut specs = conv_specs("backbone.input", c, self.in_dim, 1);
        for (i, _) in self.dilations.iter().enumerate() {
            let p = format!("backbone.block{}", i + 1);
            specs.extend(conv_specs(&format!("{p}.conv_in"), c, c, 1));
            for j in 2..=self.scale {
                specs.extend(conv_specs(&format!("{p}.res2.conv{j}"), w, w, 3));
            }
            specs.extend(conv_specs(&format!("{p}.conv_out"), c, c, 1));
            specs.extend(linear_specs(&format!("{p}.se.fc1"), c, b));
            specs.extend(linear_specs(&format!("{p}.se.fc2"), b, c));
        }
        specs.extend(conv_specs("backbone.mfa", c, c * self.n_blocks(), 1));
        specs.extend(linear_specs("backbone.frame_proj", c, self.d_model));
        specs.extend(linear_specs("backbone.pool.attn1", c, b));
        specs.extend(linear_specs("backbone.pool.attn2", b, c));
        specs.extend(linear_specs("backbone.pool_proj", 2 * c, self.d_model));
        specs
    }
}

fn bottleneck(channels: usize) -> usize {
    (channels / 8).max(4)
}

pub(crate) fn load_linear(store: &ParamStore, prefix: &str) -> Result<Linear> {
    Linear::new(
        store.get(&format!("{prefix}.weight"))?.clone(),
        store.get(&format!("{prefix}.bias"))?.clone(),
    )
}

pub(crate) fn load_conv(store: &ParamStore, prefix: &str, dilation: usize) -> Result<Conv1d> {
    Conv1d::new(
        store.get(&format!("{prefix}.weight"))?.clone(),
        store.get(&format!("{prefix}.bias"))?.clone(),
        dilation,
    )
}

/// Squeeze-excitation: per-channel gate `σ(W₂·relu(W₁·mean_t(x)))`.
#[derive(Debug, Clone)]
pub struct SeBlock {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SeBlock {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (t, c) = x.expect_matrix("se input")?;
        if self.fc1.in_dim() != c || self.fc2.out_dim() != c {
            return Err(Error::shape(format!(
                "SE block for {} channels applied to {c}",
                self.fc1.in_dim()
            )));
        }
        let s = x.mean_rows();
        let e = self.fc2.forward(&relu(&self.fc1.forward(&s)?))?.map(sigmoid);
        let gate = e.row(0);
        let mut out = x.clone();
        for i in 0..t {
            for (v, g) in out.row_mut(i).iter_mut().zip(gate) {
                *v *= g;
            }
        }
        Ok(out)
    }
}

/// SE-Res2 block with hierarchical dilated convolutions over `scale` channel groups.
#[derive(Debug, Clone)]
pub struct Res2Block {
    pub conv_in: Conv1d,
    /// Group convolutions for groups 2..=scale.
    pub convs: Vec<Conv1d>,
    pub conv_out: Conv1d,
    pub se: SeBlock,
    pub scale: usize,
}

impl Res2Block {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c) = x.expect_matrix("res2 input")?;
        if c % self.scale != 0 {
            return Err(Error::IndivisibleScale {
                channels: c,
                scale: self.scale,
            });
        }
        if self.convs.len() + 1 != self.scale {
            return Err(Error::shape("res2 group convolutions do not match scale"));
        }
        let width = c / self.scale;
        let h = self.conv_in.forward(x)?;
        let mut ys: Vec<Tensor> = Vec::with_capacity(self.scale);
        ys.push(h.slice_cols(0, width)?);
        for (i, conv) in self.convs.iter().enumerate() {
            let g = h.slice_cols((i + 1) * width, width)?;
            let inp = g.add(&ys[i])?;
            ys.push(relu(&conv.forward(&inp)?));
        }
        let cat = Tensor::concat_cols(&ys.iter().collect::<Vec<_>>())?;
        let branch = self.se.forward(&self.conv_out.forward(&cat)?)?;
        x.add(&branch)
    }
}

/// Attentive statistics pooling with one attention logit per (frame, channel).
#[derive(Debug, Clone)]
pub struct AttentiveStatsPool {
    pub attn1: Linear,
    pub attn2: Linear,
}

impl AttentiveStatsPool {
    /// Per-channel attention weights over time, `T × C`, each column summing to 1.
    pub fn weights(&self, h: &Tensor) -> Result<Tensor> {
        let logits = self
            .attn2
            .forward(&self.attn1.forward(h)?.map(f64::tanh))?;
        if logits.shape() != h.shape() {
            return Err(Error::shape("pooling logits must match input shape"));
        }
        softmax_rows(&logits.transpose()?).transpose()
    }

    /// `concat(μ, σ)` as a length-`2C` vector.
    pub fn forward(&self, h: &Tensor) -> Result<Tensor> {
        let (t, c) = h.expect_matrix("pooling input")?;
        let alpha = self.weights(h)?;
        let mut mu = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for i in 0..t {
            for j in 0..c {
                let a = alpha.at(i, j);
                let v = h.at(i, j);
                mu[j] += a * v;
                sq[j] += a * v * v;
            }
        }
        let sigma: Vec<f64> = mu
            .iter()
            .zip(&sq)
            .map(|(m, s)| (s - m * m).max(POOL_VAR_FLOOR).sqrt())
            .collect();
        mu.extend(sigma);
        Tensor::vector(mu)
    }
}

#[derive(Debug, Clone)]
pub struct BackboneOutput {
    /// `H_SV`: `T × d_model` frame states.
    pub frame_states: Tensor,
    /// `z`: pooled `d_model` representation.
    pub pooled: Tensor,
}

#[derive(Debug, Clone)]
pub struct Backbone {
    pub cfg: BackboneConfig,
    pub input: Conv1d,
    pub blocks: Vec<Res2Block>,
    pub mfa: Conv1d,
    pub frame_proj: Linear,
    pub pool: AttentiveStatsPool,
    pub pool_proj: Linear,
}

impl Backbone {
    pub fn from_store(store: &ParamStore, cfg: &BackboneConfig) -> Result<Self> {
        cfg.validate()?;
        let blocks = cfg
            .dilations
            .iter()
            .enumerate()
            .map(|(i, &dil)| {
                let p = format!("backbone.block{}", i + 1);
                Ok(Res2Block {
                    conv_in: load_conv(store, &format!("{p}.conv_in"), 1)?,
                    convs: (2..=cfg.scale)
                        .map(|j| load_conv(store, &format!("{p}.res2.conv{j}"), dil))
                        .collect::<Result<_>>()?,
                    conv_out: load_conv(store, &format!("{p}.conv_out"), 1)?,
                    se: SeBlock {
                        fc1: load_linear(store, &format!("{p}.se.fc1"))?,
                        fc2: load_linear(store, &format!("{p}.se.fc2"))?,
                    },
                    scale: cfg.scale,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            input: load_conv(store, "backbone.input", 1)?,
            blocks,
            mfa: load_conv(store, "backbone.mfa", 1)?,
            frame_proj: load_linear(store, "backbone.frame_proj")?,
            pool: AttentiveStatsPool {
                attn1: load_linear(store, "backbone.pool.attn1")?,
                attn2: load_linear(store, "backbone.pool.attn2")?,
            },
            pool_proj: load_linear(store, "backbone.pool_proj")?,
        })
    }

    /// Run on a `T × in_dim` log-mel matrix.
    pub fn forward(&self, mel: &Tensor) -> Result<BackboneOutput> {
        let (_, f) = mel.expect_matrix("backbone input")?;
        if f != self.cfg.in_dim {
            return Err(Error::shape(format!(
                "backbone expects {} mel bins, got {f}",
                self.cfg.in_dim
            )));
        }
        let mut x = relu(&self.input.forward(mel)?);
        let mut outs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            x = block.forward(&x)?;
            outs.push(x.clone());
        }
        let m = self
            .mfa
            .forward(&Tensor::concat_cols(&outs.iter().collect::<Vec<_>>())?)?;
        let frame_states = self.frame_proj.forward(&m)?;
        let stats = self.pool.forward(&m)?;
        let stats = stats.reshape(vec![1, 2 * self.cfg.channels])?;
        let pooled = self.pool_proj.forward(&stats)?;
        let pooled = pooled.reshape(vec![self.cfg.d_model])?;
        Ok(BackboneOutput {
            frame_states,
            pooled,
        })
    }
}
