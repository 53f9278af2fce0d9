//! Initialize, save, reload and compare weights, then show what corruption looks like.

use agv::synth::sine;
use agv::weights::ParamStore;
use agv::{init_params, ModelConfig, SpeakerModel};

fn main() -> agv::Result<()> {
    let cfg = ModelConfig::desk();
    let store = init_params(&cfg, 7)?;
    let dir = tempfile::tempdir().map_err(|e| agv::Error::Manifest(e.to_string()))?;
    let path = dir.path().join("desk.agvw");
    store.save(&path)?;
    let loaded = ParamStore::load(&path)?;
    println!(
        "{} tensors, {} parameters, {} bytes on disk, config {}",
        loaded.len(),
        loaded.total_parameters(),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        loaded.meta.config_digest
    );
    println!("re-encoding identical: {}", loaded.to_bytes() == std::fs::read(&path).unwrap_or_default());

    let audio = sine(150.0, 0.5, 22050, 0.5);
    let a = SpeakerModel::from_store(&store, &cfg)?.embed(&audio)?;
    let b = SpeakerModel::from_store(&loaded, &cfg)?.embed(&audio)?;
    let drift = a
        .vector
        .iter()
        .zip(&b.vector)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!("max embedding change from f32 storage: {drift:.2e}");

    let bytes = loaded.to_bytes();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let truncated = &bytes[..bytes.len() - 10];
    let mut edited = bytes.clone();
    let from = b"\"shape\":[16,80,1]";
    if let Some(at) = edited.windows(from.len()).position(|w| w == from) {
        edited[at..at + from.len()].copy_from_slice(b"\"shape\":[16,81,1]");
    }
    for (name, data) in [
        ("bad magic", bad_magic),
        ("truncated", truncated.to_vec()),
        ("edited header", edited),
    ] {
        match ParamStore::from_bytes(&data) {
            Ok(_) => println!("{name}: unexpectedly accepted"),
            Err(e) => println!("{name}: {e}"),
        }
    }
    Ok(())
}
