//! End-to-end speaker model: front-end, backbone and aggregation behind one config.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{AggregationConfig, AggregationTrace, Aggregator, Mode, SpeakerEmbedding};
use crate::audio::{resample, AudioBuffer, CANONICAL_RATE_HZ};
use crate::backbone::{Backbone, BackboneConfig, BackboneOutput};
use crate::dsp::mel::MelAnalyzer;
use crate::dsp::yin::yin_with;
use crate::dsp::{F0Contour, FrontendParams, MelSpectrogram, YinParams};
use crate::error::{Error, Result};
use crate::nn::ScaleMode;
use crate::weights::{ParamSpec, ParamStore};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub aggregation: AggregationConfig,
}

impl ModelConfig {
    /// Small configuration used throughout the tests: C=16, d=8, N=2, 2 heads.
    pub fn desk() -> Self {
        Self {
            backbone: BackboneConfig {
                channels: 16,
                d_model: 8,
                ..BackboneConfig::default()
            },
            aggregation: AggregationConfig {
                mode: Mode::SeF0ThenMe,
                splitting: true,
                n_tokens: 2,
                heads: 2,
                scale_mode: ScaleMode::Sqrt,
            },
        }
    }

    pub fn with_mode(mut self, mode: Mode, splitting: bool) -> Self {
        self.aggregation.mode = mode;
        self.aggregation.splitting = splitting;
        self
    }

    pub fn d_model(&self) -> usize {
        self.backbone.d_model
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.aggregation.validate(self.backbone.d_model)
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = self.backbone.param_specs();
        specs.extend(
            self.aggregation
                .param_specs(self.backbone.d_model, self.backbone.in_dim),
        );
        specs
    }

    /// First 8 bytes of SHA-256 over the canonical JSON form, big-endian.
    pub fn digest(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        let h = Sha256::digest(&json);
        u64::from_be_bytes(h[..8].try_into().expect("8 bytes"))
    }

    pub fn digest_hex(&self) -> String {
        format!("{:016x}", self.digest())
    }
}

/// Every intermediate of one embedding pass.
#[derive(Debug, Clone)]
pub struct ModelTrace {
    pub audio: AudioBuffer,
    pub mel: MelSpectrogram,
    pub f0: F0Contour,
    pub backbone: BackboneOutput,
    pub aggregation: AggregationTrace,
    pub embedding: SpeakerEmbedding,
}

#[derive(Debug, Clone)]
pub struct SpeakerModel {
    pub cfg: ModelConfig,
    pub backbone: Backbone,
    pub aggregator: Aggregator,
    frontend: FrontendParams,
    analyzer: MelAnalyzer,
}

impl SpeakerModel {
    /// Builds the model after checking that `store` holds exactly the parameters `cfg` needs.
    pub fn from_store(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        store.validate(cfg)?;
        let frontend = FrontendParams::default();
        if cfg.backbone.in_dim != frontend.n_mels {
            return Err(Error::InvalidConfig(format!(
                "backbone expects {} mel bins, front-end produces {}",
                cfg.backbone.in_dim, frontend.n_mels
            )));
        }
        Ok(Self {
            cfg: cfg.clone(),
            backbone: Backbone::from_store(store, &cfg.backbone)?,
            aggregator: Aggregator::from_store(store, &cfg.aggregation)?,
            analyzer: MelAnalyzer::new(frontend)?,
            frontend,
        })
    }

    pub fn mode(&self) -> Mode {
        self.cfg.aggregation.mode
    }

    pub fn embed(&self, buf: &AudioBuffer) -> Result<SpeakerEmbedding> {
        Ok(self.forward_detailed(buf)?.embedding)
    }

    pub fn forward_detailed(&self, buf: &AudioBuffer) -> Result<ModelTrace> {
        let audio = if buf.sample_rate_hz() == CANONICAL_RATE_HZ {
            buf.clone()
        } else {
            resample(buf, CANONICAL_RATE_HZ)?
        };
        if audio.len() < self.frontend.win_length {
            return Err(Error::TooShort {
                len: audio.len(),
                need: self.frontend.win_length,
            });
        }
        let mel = self.analyzer.analyze(audio.samples())?;
        let f0 = yin_with(audio.samples(), &self.frontend, &YinParams::default())?;
        let backbone = self.backbone.forward(&mel.frames)?;
        let aggregation = self
            .aggregator
            .forward(&backbone.frame_states, &backbone.pooled, &mel, &f0)?;
        if !aggregation.vector.is_finite() {
            return Err(Error::NonFiniteEvaluation("embedding".into()));
        }
        let embedding = SpeakerEmbedding {
            vector: aggregation.vector.data().to_vec(),
            mode: self.mode(),
            config_hash: self.cfg.digest(),
        };
        Ok(ModelTrace {
            audio,
            mel,
            f0,
            backbone,
            aggregation,
            embedding,
        })
    }
}
