//! Log-mel and YIN F0 analysis of a tone, a sawtooth and silence.

use agv::dsp::{mel_spectrogram, write_f0_csv, yin_f0};
use agv::synth::{sawtooth, silence, sine};

fn main() -> agv::Result<()> {
    for (name, buf) in [
        ("sine 220 Hz", sine(220.0, 1.0, 22050, 0.5)),
        ("sawtooth 130 Hz", sawtooth(130.0, 1.0, 22050, 0.5)),
        ("silence", silence(1.0, 22050)),
    ] {
        let mel = mel_spectrogram(&buf)?;
        let f0 = yin_f0(&buf)?;
        let voiced: Vec<f64> = f0.frames.iter().filter(|f| f.voiced).map(|f| f.f0_hz).collect();
        let median = if voiced.is_empty() {
            f64::NAN
        } else {
            let mut v = voiced.clone();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let peak_bin = (0..80)
            .max_by(|&a, &b| mel.frames.at(10, a).total_cmp(&mel.frames.at(10, b)))
            .unwrap_or(0);
        println!(
            "{name:>16}: {} frames, voiced {:>5.1}%, median f0 {median:.2} Hz, loudest mel bin {peak_bin}",
            mel.n_frames(),
            100.0 * f0.voiced_fraction(),
        );
    }

    println!("\nfirst F0 rows of the sine:");
    let f0 = yin_f0(&sine(220.0, 0.1, 22050, 0.5))?;
    write_f0_csv(&f0, &mut std::io::stdout()).expect("stdout");
    Ok(())
}
