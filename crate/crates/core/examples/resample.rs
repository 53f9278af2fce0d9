//! Band-limited resampling of a WAV file (or a 44.1 kHz test tone) to 22050 Hz.
//!
//! ```text
//! cargo run --example resample -- in.wav out.wav
//! ```

use agv::audio::{canonicalize, read_wav, write_wav_pcm16};
use agv::synth::sine;

fn main() -> agv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let input = match args.first() {
        Some(p) => read_wav(p)?,
        None => sine(440.0, 1.0, 44100, 0.5),
    };
    let out = canonicalize(&input, false)?;
    println!(
        "{} samples @ {} Hz -> {} samples @ {} Hz",
        input.len(),
        input.sample_rate_hz(),
        out.len(),
        out.sample_rate_hz()
    );
    if args.is_empty() {
        let reference = sine(440.0, 1.0, 22050, 0.5);
        let interior = 80..out.len() - 80;
        let mse: f64 = interior
            .clone()
            .map(|i| (out.samples()[i] - reference.samples()[i]).powi(2))
            .sum::<f64>()
            / interior.len() as f64;
        println!("RMS error against an analytic 22050 Hz tone: {:.2e}", mse.sqrt());
    }
    if let Some(dst) = args.get(1) {
        write_wav_pcm16(dst, &out)?;
        println!("wrote {dst}");
    }
    Ok(())
}
