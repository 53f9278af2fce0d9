//! Frame-wise YIN F0 estimation on the same grid as the mel spectrogram.
//!
//! Each frame of `win_length` samples yields the difference function
//! `d(τ) = Σ_{j<W} (x_j − x_{j+τ})²` with integration window `W = win_length/2` and
//! `τ ∈ [1, W]`, normalized into the cumulative-mean-normalized difference `d′`.

use super::FrontendParams;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YinParams {
    pub threshold: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Frames whose best `d′` exceeds this are unvoiced.
    pub unvoiced_cmnd: f64,
    /// Frames with RMS below this are unvoiced.
    pub silence_rms: f64,
}

impl Default for YinParams {
    fn default() -> Self {
        Self {
            threshold: 0.15,
            fmin_hz: 60.0,
            fmax_hz: 500.0,
            unvoiced_cmnd: 0.5,
            silence_rms: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Frame {
    pub f0_hz: f64,
    pub voiced: bool,
    pub cmnd_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour {
    pub frames: Vec<F0Frame>,
    pub hop_length: usize,
    pub win_length: usize,
}

impl F0Contour {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().filter(|f| f.voiced).count() as f64 / self.frames.len() as f64
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self {
            frames: self.frames[..n.min(self.frames.len())].to_vec(),
            ..*self
        }
    }
}

/// Cumulative-mean-normalized difference for lags `0..=max_lag` (index 0 is 1 by definition).
pub(crate) fn cmnd(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let w = max_lag;
    let mut out = vec![1.0; max_lag + 1];
    let mut running = 0.0;
    for tau in 1..=max_lag {
        let d: f64 = (0..w)
            .map(|j| {
                let diff = frame[j] - frame[j + tau];
                diff * diff
            })
            .sum();
        running += d;
        out[tau] = if running > 0.0 {
            d * tau as f64 / running
        } else {
            1.0
        };
    }
    out
}

/// Offset of the vertex of the parabola through `(−1, a)`, `(0, b)`, `(1, c)`.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom <= 0.0 {
        0.0
    } else {
        (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
    }
}

pub(crate) fn yin_frame(frame: &[f64], sample_rate: f64, p: &YinParams) -> F0Frame {
    let max_lag = frame.len() / 2;
    let rms = (frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64).sqrt();
    let d = cmnd(frame, max_lag);

    let tau_lo = ((sample_rate / p.fmax_hz).ceil() as usize).max(2);
    let tau_hi = ((sample_rate / p.fmin_hz).floor() as usize).min(max_lag - 1);

    let mut chosen = None;
    let mut tau = tau_lo;
    while tau <= tau_hi {
        if d[tau] < p.threshold {
            while tau < tau_hi && d[tau + 1] < d[tau] {
                tau += 1;
            }
            chosen = Some(tau);
            break;
        }
        tau += 1;
    }
    let tau = chosen.unwrap_or_else(|| {
        (tau_lo..=tau_hi)
            .min_by(|&a, &b| d[a].total_cmp(&d[b]))
            .unwrap_or(tau_lo)
    });
    let cmnd_min = d[tau];

    if rms < p.silence_rms || cmnd_min > p.unvoiced_cmnd {
        return F0Frame {
            f0_hz: 0.0,
            voiced: false,
            cmnd_min,
        };
    }
    let refined = (tau as f64 + parabolic_offset(d[tau - 1], d[tau], d[tau + 1]))
        .clamp(sample_rate / p.fmax_hz, sample_rate / p.fmin_hz);
    F0Frame {
        f0_hz: sample_rate / refined,
        voiced: true,
        cmnd_min,
    }
}

pub(crate) fn yin_with(
    samples: &[f64],
    frontend: &FrontendParams,
    p: &YinParams,
) -> Result<F0Contour> {
    let n_frames = frontend.frame_count(samples.len())?;
    let sr = f64::from(frontend.sample_rate);
    let frames = (0..n_frames)
        .map(|t| {
            let start = t * frontend.hop_length;
            yin_frame(&samples[start..start + frontend.win_length], sr, p)
        })
        .collect();
    Ok(F0Contour {
        frames,
        hop_length: frontend.hop_length,
        win_length: frontend.win_length,
    })
}

/// YIN F0 with the default parameters (threshold 0.15, 60–500 Hz), hop 256, window 1024.
pub fn yin_f0(buf: &AudioBuffer) -> Result<F0Contour> {
    let frontend = FrontendParams {
        sample_rate: buf.sample_rate_hz(),
        ..FrontendParams::default()
    };
    if buf.len() < frontend.win_length {
        return Err(Error::TooShort {
            len: buf.len(),
            need: frontend.win_length,
        });
    }
    yin_with(buf.samples(), &frontend, &YinParams::default())
}
