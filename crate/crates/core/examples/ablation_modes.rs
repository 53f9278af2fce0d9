//! Every aggregation mode, with and without token-bank fusion, on one utterance.

use agv::eval::cosine;
use agv::synth::speaker_templates;
use agv::{init_params, Mode, ModelConfig, SpeakerModel};

fn main() -> agv::Result<()> {
    let audio = speaker_templates()[1].utterance(0, 0.5);
    let se = {
        let cfg = ModelConfig::desk().with_mode(Mode::Se, true);
        SpeakerModel::from_store(&init_params(&cfg, 0)?, &cfg)?.embed(&audio)?
    };
    println!("{:<10} {:<6} {:>8} {:>10}  config", "mode", "split", "norm", "cos(se)");
    for mode in Mode::ALL {
        for split in [true, false] {
            let cfg = ModelConfig::desk().with_mode(mode, split);
            let store = init_params(&cfg, 0)?;
            let e = SpeakerModel::from_store(&store, &cfg)?.embed(&audio)?;
            println!(
                "{:<10} {:<6} {:>8.4} {:>10.4}  {:016x} ({} params)",
                mode.as_str(),
                split,
                e.norm(),
                cosine(&e.vector, &se.vector)?,
                e.config_hash,
                store.total_parameters()
            );
        }
    }
    Ok(())
}
