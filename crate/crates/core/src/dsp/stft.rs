use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::FrontendParams;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// `T × (n_fft/2 + 1)` magnitudes.
pub type Spectrogram = Tensor;

/// Periodic Hann window: `0.5 − 0.5·cos(2πn/N)` for `n < N`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

#[derive(Clone)]
pub(crate) struct StftPlan {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    params: FrontendParams,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("params", &self.params).finish_non_exhaustive()
    }
}

impl StftPlan {
    pub(crate) fn new(params: FrontendParams) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(params.n_fft);
        let mut window = hann_periodic(params.win_length);
        // a window shorter than n_fft is zero-padded symmetrically
        let pad = params.n_fft.saturating_sub(params.win_length);
        if pad > 0 {
            let mut padded = vec![0.0; pad / 2];
            padded.extend(window);
            padded.resize(params.n_fft, 0.0);
            window = padded;
        }
        Self {
            fft,
            window,
            params,
        }
    }

    pub(crate) fn magnitude(&self, samples: &[f64]) -> Result<Spectrogram> {
        let p = &self.params;
        if samples.len() < p.n_fft.max(p.win_length) {
            return Err(Error::TooShort {
                len: samples.len(),
                need: p.n_fft.max(p.win_length),
            });
        }
        let frames = p.frame_count(samples.len())?;
        let bins = p.n_bins();
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); p.n_fft];
        for t in 0..frames {
            let start = t * p.hop_length;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(samples[start + i] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            out.extend(buf[..bins].iter().map(|c| c.norm()));
        }
        Ok(Tensor::from_parts(vec![frames, bins], out))
    }
}

/// Magnitude STFT: periodic Hann, no center padding, hop 256, 513 bins per frame.
pub fn stft_magnitude(buf: &AudioBuffer) -> Result<Spectrogram> {
    StftPlan::new(FrontendParams::default()).magnitude(buf.samples())
}
