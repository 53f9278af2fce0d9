//! Embed a WAV file with seeded weights.
//!
//! ```text
//! cargo run --example embed_wav -- path/to/voice.wav [seed]
//! ```
//!
//! Without arguments a synthetic 220 Hz voice is embedded.

use agv::audio::read_wav;
use agv::synth::speaker_templates;
use agv::{init_params, ModelConfig, SpeakerModel};

fn main() -> agv::Result<()> {
    let mut args = std::env::args().skip(1);
    let audio = match args.next() {
        Some(path) => read_wav(path)?,
        None => speaker_templates()[2].utterance(0, 1.0),
    };
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let cfg = ModelConfig::desk();
    let store = init_params(&cfg, seed)?;
    let model = SpeakerModel::from_store(&store, &cfg)?;
    let trace = model.forward_detailed(&audio)?;

    println!(
        "{:.2} s at {} Hz -> {} frames, {:.0}% voiced",
        audio.duration_secs(),
        audio.sample_rate_hz(),
        trace.mel.n_frames(),
        100.0 * trace.f0.voiced_fraction()
    );
    println!("{}", trace.embedding.to_json());
    Ok(())
}
