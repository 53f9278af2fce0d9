//! Automated ABX: which candidate utterance sounds most like the reference?

use agv::dsp::mel_spectrogram;
use agv::eval::{abx_select, cosine, mel_stats_embedding};
use agv::synth::speaker_templates;

fn main() -> agv::Result<()> {
    let templates = speaker_templates();
    let embed = |spk: usize, utt: usize| -> agv::Result<Vec<f64>> {
        Ok(mel_stats_embedding(&mel_spectrogram(&templates[spk].utterance(utt, 1.0))?))
    };
    let mut correct = 0;
    for target in 0..templates.len() {
        let reference = embed(target, 0)?;
        let candidates: Vec<Vec<f64>> = (0..templates.len())
            .map(|s| embed(s, 1))
            .collect::<agv::Result<_>>()?;
        let chosen = abx_select(&reference, &candidates)?;
        let sims: Vec<String> = candidates
            .iter()
            .map(|c| cosine(&reference, c).map(|v| format!("{v:.4}")))
            .collect::<agv::Result<_>>()?;
        println!(
            "reference {} -> chose {} [{}]",
            templates[target].id,
            templates[chosen].id,
            sims.join(", ")
        );
        correct += usize::from(chosen == target);
    }
    println!("{correct}/{} trials picked the same speaker", templates.len());
    Ok(())
}
