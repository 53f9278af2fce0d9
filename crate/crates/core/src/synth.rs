//! Deterministic test signals and synthetic "speakers" built from harmonic templates.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioBuffer, CANONICAL_RATE_HZ};

fn n_samples(secs: f64, sample_rate: u32) -> usize {
    (secs * f64::from(sample_rate)).round() as usize
}

pub fn sine(hz: f64, secs: f64, sample_rate: u32, amplitude: f64) -> AudioBuffer {
    let sr = f64::from(sample_rate);
    let s = (0..n_samples(secs, sample_rate))
        .map(|i| amplitude * (2.0 * PI * hz * i as f64 / sr).sin())
        .collect();
    AudioBuffer::new(s, sample_rate).expect("finite non-empty tone")
}

pub fn silence(secs: f64, sample_rate: u32) -> AudioBuffer {
    AudioBuffer::new(vec![0.0; n_samples(secs, sample_rate).max(1)], sample_rate)
        .expect("non-empty")
}

/// Naive sawtooth in `[-amplitude, amplitude)`.
pub fn sawtooth(hz: f64, secs: f64, sample_rate: u32, amplitude: f64) -> AudioBuffer {
    let sr = f64::from(sample_rate);
    let s = (0..n_samples(secs, sample_rate))
        .map(|i| {
            let phase = (hz * i as f64 / sr).fract();
            amplitude * (2.0 * phase - 1.0)
        })
        .collect();
    AudioBuffer::new(s, sample_rate).expect("finite non-empty tone")
}

/// A voice stand-in: fundamental plus harmonics whose level falls by `tilt_db_per_octave`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerTemplate {
    pub id: String,
    pub f0_hz: f64,
    pub tilt_db_per_octave: f64,
}

/// Four templates with fundamentals 110, 160, 220 and 310 Hz and distinct spectral tilts.
pub fn speaker_templates() -> Vec<SpeakerTemplate> {
    [(110.0, -3.0), (160.0, -9.0), (220.0, -5.0), (310.0, -12.0)]
        .iter()
        .enumerate()
        .map(|(i, &(f0_hz, tilt))| SpeakerTemplate {
            id: format!("spk{}", i + 1),
            f0_hz,
            tilt_db_per_octave: tilt,
        })
        .collect()
}

impl SpeakerTemplate {
    /// Utterance `index`: the fundamental drifts by up to ±3 %, with slow vibrato,
    /// random harmonic phases, a little noise and a per-utterance gain.
    pub fn utterance(&self, index: usize, secs: f64) -> AudioBuffer {
        let sr = f64::from(CANONICAL_RATE_HZ);
        let seed = self.f0_hz.to_bits() ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f0 = self.f0_hz * (1.0 + rng.gen_range(-0.03..0.03));
        let vibrato_hz = rng.gen_range(4.0..6.0);
        let gain = rng.gen_range(0.5..0.8);
        let n_harm = ((7600.0 / f0) as usize).max(1);
        let amps: Vec<f64> = (1..=n_harm)
            .map(|k| 10f64.powf(self.tilt_db_per_octave * (k as f64).log2() / 20.0))
            .collect();
        let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let norm: f64 = amps.iter().sum();
        let n = n_samples(secs, CANONICAL_RATE_HZ);
        let mut phase = 0.0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / sr;
            let inst = f0 * (1.0 + 0.01 * (2.0 * PI * vibrato_hz * t).sin());
            phase += 2.0 * PI * inst / sr;
            let v: f64 = amps
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(k, (a, p))| a * ((k + 1) as f64 * phase + p).sin())
                .sum();
            out.push(gain * v / norm + 0.002 * rng.gen_range(-1.0..1.0));
        }
        AudioBuffer::new(out, CANONICAL_RATE_HZ).expect("finite synthetic utterance")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signals_are_bounded_and_deterministic() {
        for t in speaker_templates() {
            let a = t.utterance(1, 0.2);
            assert_eq!(a, t.utterance(1, 0.2));
            assert_ne!(a, t.utterance(2, 0.2));
            assert!(a.samples().iter().all(|v| v.abs() <= 1.0));
        }
        let s = sawtooth(100.0, 0.1, 22050, 0.5);
        assert!(s.samples().iter().all(|v| (-0.5..0.5).contains(v)));
        assert_eq!(sine(440.0, 1.0, 16000, 0.5).len(), 16000);
        assert!(silence(0.5, 22050).samples().iter().all(|&v| v == 0.0));
    }
}
