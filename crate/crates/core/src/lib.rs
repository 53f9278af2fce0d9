//! Speaker embeddings from raw audio through multi-level attention aggregation.
//!
//! The pipeline runs WAV decoding and resampling ([`audio`]), a log-mel and YIN F0
//! front-end ([`dsp`]), an SE-Res2 backbone ([`backbone`]) and cross-attention
//! aggregation with a learned token bank ([`aggregation`]). [`model::SpeakerModel`]
//! wires these together over a [`weights::ParamStore`]; [`eval`] scores the results.

pub mod aggregation;
pub mod cli;
pub mod audio;
pub mod backbone;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod synth;
pub mod util;
pub mod weights;

pub use aggregation::{Mode, SpeakerEmbedding};
pub use error::{Error, Result};
pub use model::{ModelConfig, SpeakerModel};
pub use weights::{init_params, ParamStore};
