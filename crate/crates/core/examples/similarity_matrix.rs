//! Cross-similarity of four synthetic speakers with three utterances each.
//!
//! A weight-free mel-statistics embedding is scored next to the seeded network; the
//! network matrix is written as CSV and PGM into the directory given as the first
//! argument (default: the system temp directory).

use std::path::PathBuf;

use agv::dsp::mel_spectrogram;
use agv::eval::{cross_similarity, diagonal_dominance, grouped_cross_similarity, mel_stats_embedding};
use agv::synth::speaker_templates;
use agv::{init_params, ModelConfig, SpeakerModel};

fn main() -> agv::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let cfg = ModelConfig::desk();
    let model = SpeakerModel::from_store(&init_params(&cfg, 0)?, &cfg)?;

    let mut speakers = Vec::new();
    let mut ids = Vec::new();
    let mut baseline = Vec::new();
    let mut neural = Vec::new();
    for t in speaker_templates() {
        for u in 0..3 {
            let audio = t.utterance(u, 1.0);
            baseline.push(mel_stats_embedding(&mel_spectrogram(&audio)?));
            neural.push(model.embed(&audio)?.vector);
            speakers.push(t.id.clone());
            ids.push(format!("{}_{u}", t.id));
        }
    }

    let grouped = grouped_cross_similarity(&speakers, &baseline)?;
    println!("mel-statistics baseline, speaker-level matrix:");
    for (label, row) in grouped.row_labels.iter().zip(&grouped.values) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        println!("  {label}  {}", cells.join("  "));
    }
    println!("diagonal dominance {:.2}", diagonal_dominance(&grouped)?);

    let full = cross_similarity(&neural, &neural)?.with_labels(ids.clone(), ids)?;
    let csv = out_dir.join("agv_similarity.csv");
    let pgm = out_dir.join("agv_similarity.pgm");
    let mut buf = Vec::new();
    full.write_csv(&mut buf).expect("in-memory write");
    agv::util::write_atomic(&csv, &buf)?;
    agv::util::write_atomic(&pgm, &full.to_pgm())?;
    println!(
        "seeded network: {}x{} matrix written to {} and {}",
        full.n_rows(),
        full.n_cols(),
        csv.display(),
        pgm.display()
    );
    let net_grouped = grouped_cross_similarity(&speakers, &neural)?;
    println!(
        "network dominance with untrained weights {:.2}",
        diagonal_dominance(&net_grouped)?
    );
    Ok(())
}
