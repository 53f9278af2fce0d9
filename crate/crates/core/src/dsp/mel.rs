use super::stft::StftPlan;
use super::FrontendParams;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Floor applied to mel magnitudes before the log.
pub const MEL_FLOOR: f64 = 1e-5;

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    }
}

#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels × n_bins`.
    pub weights: Tensor,
    pub center_hz: Vec<f64>,
}

/// Triangular, area-normalized filters with centers equally spaced in mel.
pub fn mel_filterbank(params: &FrontendParams) -> Result<MelFilterbank> {
    let nyquist = f64::from(params.sample_rate) / 2.0;
    if !(params.fmin_hz >= 0.0 && params.fmin_hz < params.fmax_hz && params.fmax_hz <= nyquist) {
        return Err(Error::DegenerateBand(format!(
            "band [{}, {}] Hz outside (0, {nyquist}]",
            params.fmin_hz, params.fmax_hz
        )));
    }
    let n_bins = params.n_bins();
    let bin_hz: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * f64::from(params.sample_rate) / params.n_fft as f64)
        .collect();
    let in_band = bin_hz
        .iter()
        .filter(|&&f| f >= params.fmin_hz && f <= params.fmax_hz)
        .count();
    if in_band < params.n_mels {
        return Err(Error::DegenerateBand(format!(
            "{in_band} FFT bins in band for {} mel filters",
            params.n_mels
        )));
    }

    let (m_lo, m_hi) = (hz_to_mel(params.fmin_hz), hz_to_mel(params.fmax_hz));
    let edges: Vec<f64> = (0..params.n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (params.n_mels + 1) as f64))
        .collect();

    let mut w = vec![0.0; params.n_mels * n_bins];
    for m in 0..params.n_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        let row = &mut w[m * n_bins..(m + 1) * n_bins];
        for (v, &f) in row.iter_mut().zip(&bin_hz) {
            let rising = (f - lo) / (c - lo);
            let falling = (hi - f) / (hi - c);
            *v = rising.min(falling).max(0.0) * norm;
        }
        if row.iter().all(|&v| v <= 0.0) {
            return Err(Error::DegenerateBand(format!(
                "filter {m} ({lo:.1}–{hi:.1} Hz) covers no FFT bin"
            )));
        }
    }
    Ok(MelFilterbank {
        weights: Tensor::from_parts(vec![params.n_mels, n_bins], w),
        center_hz: edges[1..=params.n_mels].to_vec(),
    })
}

/// `T × n_mels` natural-log mel magnitudes, floored at `ln(1e-5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Tensor,
    pub params: FrontendParams,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }
}

impl MelFilterbank {
    pub(crate) fn apply(&self, magnitude: &Tensor) -> Result<Tensor> {
        let projected = magnitude.matmul(&self.weights.transpose()?)?;
        Ok(projected.map(|v| v.max(MEL_FLOOR).ln()))
    }
}

/// Reusable STFT plan plus filterbank.
#[derive(Debug, Clone)]
pub(crate) struct MelAnalyzer {
    plan: StftPlan,
    bank: MelFilterbank,
    params: FrontendParams,
}

impl MelAnalyzer {
    pub(crate) fn new(params: FrontendParams) -> Result<Self> {
        Ok(Self {
            plan: StftPlan::new(params),
            bank: mel_filterbank(&params)?,
            params,
        })
    }

    pub(crate) fn analyze(&self, samples: &[f64]) -> Result<MelSpectrogram> {
        let mag = self.plan.magnitude(samples)?;
        Ok(MelSpectrogram {
            frames: self.bank.apply(&mag)?,
            params: self.params,
        })
    }
}

pub fn mel_spectrogram(buf: &AudioBuffer) -> Result<MelSpectrogram> {
    MelAnalyzer::new(FrontendParams::default())?.analyze(buf.samples())
}
