//! Acoustic front-end: log-mel spectrogram and YIN F0, framed identically so that
//! frame `t` of one lines up with frame `t` of the other.

pub(crate) mod mel;
mod stft;
pub(crate) mod yin;

use std::io::Write;

pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelFilterbank, MelSpectrogram};
pub use stft::{hann_periodic, stft_magnitude, Spectrogram};
pub use yin::{yin_f0, F0Contour, F0Frame, YinParams};

use crate::audio::CANONICAL_RATE_HZ;
use crate::error::{Error, Result};

/// Framing and filterbank parameters shared by every front-end view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendParams {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
}

impl Default for FrontendParams {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            win_length: 1024,
            hop_length: 256,
            n_mels: 80,
            sample_rate: CANONICAL_RATE_HZ,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
        }
    }
}

impl FrontendParams {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// `floor((n − win) / hop) + 1` frames without center padding.
    pub fn frame_count(&self, n_samples: usize) -> Result<usize> {
        if n_samples < self.win_length {
            return Err(Error::TooShort {
                len: n_samples,
                need: self.win_length,
            });
        }
        Ok((n_samples - self.win_length) / self.hop_length + 1)
    }
}

/// Format with 9 significant digits.
pub(crate) fn sig9(v: f64) -> String {
    format!("{v:.8e}")
        .parse::<f64>()
        .map(|x| format!("{x}"))
        .unwrap_or_else(|_| v.to_string())
}

/// `T` rows × `n_mels` columns, no header.
pub fn write_mel_csv(mel: &MelSpectrogram, out: &mut impl Write) -> std::io::Result<()> {
    for t in 0..mel.frames.rows() {
        let line: Vec<String> = mel.frames.row(t).iter().map(|&v| sig9(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Header `frame_index,f0_hz,voiced,cmnd_min`, then one row per frame.
pub fn write_f0_csv(f0: &F0Contour, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "frame_index,f0_hz,voiced,cmnd_min")?;
    for (i, fr) in f0.frames.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{}",
            sig9(fr.f0_hz),
            u8::from(fr.voiced),
            sig9(fr.cmnd_min)
        )?;
    }
    Ok(())
}
