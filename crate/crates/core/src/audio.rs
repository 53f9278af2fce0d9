//! WAV decoding, resampling and canonicalization to 22050 Hz mono.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

pub const CANONICAL_RATE_HZ: u32 = 22_050;
pub const MIN_RATE_HZ: u32 = 4_000;

/// Zero crossings of the sinc kernel on each side of the output instant.
pub const RESAMPLE_ZERO_CROSSINGS: usize = 64;
pub const RESAMPLE_KAISER_BETA: f64 = 8.0;
/// Passband edge as a fraction of the lower Nyquist frequency.
pub const RESAMPLE_ROLLOFF: f64 = 0.95;

/// Above this many distinct filter phases the kernel is evaluated on the fly.
const MAX_PHASE_TABLE: usize = 4096;

/// Mono samples in `[-1, 1]` at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate_hz == 0 {
            return Err(Error::RateOutOfRange(0));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteEvaluation("audio sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Scale so the largest magnitude equals `0.95`. Silent buffers are returned as-is.
    pub fn peak_normalized(&self) -> Self {
        let peak = self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if peak == 0.0 {
            return self.clone();
        }
        let g = 0.95 / peak;
        Self {
            samples: self.samples.iter().map(|s| s * g).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported WAVE format".into()),
        hound::Error::TooWide | hound::Error::InvalidSampleFormat => {
            Error::UnsupportedEncoding(e.to_string())
        }
        other => Error::MalformedContainer(other.to_string()),
    }
}

/// Decode a RIFF/WAVE byte stream (PCM 16-bit or IEEE float 32-bit), folding channels to
/// mono by averaging. The original sample rate is preserved.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedContainer("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| f64::from(v).clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(Error::MalformedContainer("partial sample frame".into()));
    }
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|f| f.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Encode mono PCM16. Samples are clipped to `[-1, 1]` and scaled by 32768 with rounding.
pub fn encode_wav_pcm16(buf: &AudioBuffer) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut cursor, spec).expect("in-memory writer");
        for &s in &buf.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    cursor.into_inner()
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav_pcm16(buf)).map_err(|e| Error::io(path, e))
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = (x / 2.0) * (x / 2.0);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct SincKernel {
    /// Normalized cutoff, in cycles per source sample × 2.
    gain: f64,
    half_width: f64,
    i0_beta: f64,
}

impl SincKernel {
    fn new(src: u32, dst: u32) -> Self {
        let gain = RESAMPLE_ROLLOFF * f64::from(src.min(dst)) / f64::from(src);
        Self {
            gain,
            half_width: RESAMPLE_ZERO_CROSSINGS as f64 / gain,
            i0_beta: bessel_i0(RESAMPLE_KAISER_BETA),
        }
    }

    /// Weight of a source sample `t` source-samples away from the output instant.
    fn weight(&self, t: f64) -> f64 {
        let x = t / self.half_width;
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let win = bessel_i0(RESAMPLE_KAISER_BETA * (1.0 - x * x).sqrt()) / self.i0_beta;
        self.gain * sinc(self.gain * t) * win
    }
}

/// Band-limited windowed-sinc resampling (Kaiser window, 64 zero crossings per side,
/// cutoff at 0.95 of the lower Nyquist). Equal rates return the input unchanged.
pub fn resample(buf: &AudioBuffer, target_hz: u32) -> Result<AudioBuffer> {
    let src = buf.sample_rate_hz;
    if src < MIN_RATE_HZ {
        return Err(Error::RateOutOfRange(src));
    }
    if target_hz < MIN_RATE_HZ {
        return Err(Error::RateOutOfRange(target_hz));
    }
    if src == target_hz {
        return Ok(buf.clone());
    }
    let x = &buf.samples;
    let n_in = x.len();
    let out_len = ((n_in as f64) * f64::from(target_hz) / f64::from(src)).round() as usize;
    let out_len = out_len.max(1);

    let g = gcd(u64::from(src), u64::from(target_hz));
    let up = u64::from(target_hz) / g; // phases per source step
    let down = u64::from(src) / g;
    let kernel = SincKernel::new(src, target_hz);
    let reach = kernel.half_width.ceil() as i64;
    let taps = (2 * reach + 1) as usize;

    let table: Option<Vec<f64>> = (up as usize <= MAX_PHASE_TABLE).then(|| {
        let mut t = Vec::with_capacity(up as usize * taps);
        for p in 0..up {
            let frac = p as f64 / up as f64;
            for j in -reach..=reach {
                t.push(kernel.weight(frac - j as f64));
            }
        }
        t
    });

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let num = n * down;
        let base = (num / up) as i64;
        let phase = num % up;
        let frac = phase as f64 / up as f64;
        let mut acc = 0.0;
        let lo = (base - reach).max(0);
        let hi = (base + reach).min(n_in as i64 - 1);
        for k in lo..=hi {
            let j = k - base;
            let w = match &table {
                Some(t) => t[phase as usize * taps + (j + reach) as usize],
                None => kernel.weight(frac - j as f64),
            };
            acc += w * x[k as usize];
        }
        out.push(acc.clamp(-1.0, 1.0));
    }
    AudioBuffer::new(out, target_hz)
}

/// Resample to 22050 Hz and optionally peak-normalize.
pub fn canonicalize(buf: &AudioBuffer, peak_normalize: bool) -> Result<AudioBuffer> {
    let out = resample(buf, CANONICAL_RATE_HZ)?;
    Ok(if peak_normalize {
        out.peak_normalized()
    } else {
        out
    })
}
