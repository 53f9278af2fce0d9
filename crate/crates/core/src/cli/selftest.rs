use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::Manifest;
use crate::aggregation::{check_tail, Mode, TailInputs};
use crate::audio::{canonicalize, read_wav, AudioBuffer};
use crate::dsp::{mel_spectrogram, yin_f0, FrontendParams};
use crate::error::Result;
use crate::model::{ModelConfig, SpeakerModel};
use crate::nn::gradcheck::check_attention;
use crate::nn::{GradcheckOptions, ScaleMode, Tensor};
use crate::synth::{silence, sine};
use crate::weights::{init_params, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("finite draws")
}

fn attention_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = GradcheckOptions::default();
    let mut worst: f64 = 0.0;
    let mut caught = f64::INFINITY;
    for i in 0..20 {
        let mode = if i % 2 == 0 { ScaleMode::Sqrt } else { ScaleMode::Linear };
        let (tq, tk) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let (d, dv) = (rng.gen_range(1..7), rng.gen_range(1..7));
        let q = rand_tensor(&mut rng, tq, d);
        let k = rand_tensor(&mut rng, tk, d);
        let v = rand_tensor(&mut rng, tk, dv);
        let g = rand_tensor(&mut rng, tq, dv);
        worst = worst.max(check_attention(&q, &k, &v, &g, mode, false, opts)?.worst_error);
        caught = caught.min(check_attention(&q, &k, &v, &g, mode, true, opts)?.worst_error);
    }
    Ok(vec![
        Check::new(
            "attention gradcheck",
            worst <= opts.rel_tol,
            format!("worst relative error {worst:.3e} over 20 instances"),
        ),
        Check::new(
            "attention negative control",
            caught > 1e-2,
            format!("sign-flipped gradient error {caught:.3e}"),
        ),
    ])
}

fn tail_checks(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for mode in Mode::ALL.into_iter().filter(|m| *m != Mode::Se) {
        for split in [true, false] {
            let cfg = ModelConfig::desk().with_mode(mode, split);
            let store = init_params(&cfg, seed)?;
            let inputs = TailInputs {
                h_sv: rand_tensor(&mut rng, 4, 8),
                h_f0: Some(rand_tensor(&mut rng, 4, 8)),
                h_me: Some(rand_tensor(&mut rng, 4, 8)),
            };
            let r = check_tail(&store, &cfg.aggregation, &inputs, GradcheckOptions::default())?;
            worst = worst.max(r.worst_error);
        }
    }
    Ok(Check::new(
        "aggregation gradcheck",
        worst <= GradcheckOptions::default().rel_tol,
        format!("worst relative error {worst:.3e} over 8 mode/splitting variants"),
    ))
}

fn dsp_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut worst_frac: f64 = 1.0;
    for hz in [110.0, 220.0, 440.0] {
        let f0 = yin_f0(&sine(hz, 1.0, 22050, 0.5))?;
        let interior = &f0.frames[1..f0.len() - 1];
        let good = interior
            .iter()
            .filter(|f| f.voiced && (f.f0_hz - hz).abs() < 0.5)
            .count();
        worst_frac = worst_frac.min(good as f64 / interior.len() as f64);
    }
    checks.push(Check::new(
        "YIN tone suite",
        worst_frac >= 0.95,
        format!("worst fraction of interior frames within 0.5 Hz: {worst_frac:.3}"),
    ));
    let quiet = yin_f0(&silence(1.0, 22050))?;
    checks.push(Check::new(
        "YIN silence",
        quiet.frames.iter().all(|f| !f.voiced),
        format!("voiced fraction {:.3}", quiet.voiced_fraction()),
    ));
    let p = FrontendParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut aligned = true;
    for _ in 0..10 {
        let n = rng.gen_range(1024..12000);
        let buf = AudioBuffer::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), 22050)?;
        let expect = (n - 1024) / 256 + 1;
        aligned &= mel_spectrogram(&buf)?.n_frames() == expect && yin_f0(&buf)?.len() == expect;
        aligned &= p.frame_count(n)? == expect;
    }
    checks.push(Check::new(
        "framing alignment",
        aligned,
        "mel and F0 frame counts on 10 random lengths".into(),
    ));
    Ok(checks)
}

fn manifest_checks(path: &Path) -> Result<Check> {
    let manifest = Manifest::load(path)?;
    let mut failures = Vec::new();
    let mut unvoiced = 0;
    let mut frames = 0;
    for r in &manifest.records {
        let res = (|| -> Result<()> {
            let buf = canonicalize(&read_wav(&r.path)?, false)?;
            let mel = mel_spectrogram(&buf)?;
            let f0 = yin_f0(&buf)?;
            let expect = FrontendParams::default().frame_count(buf.len())?;
            if mel.n_frames() != expect || f0.len() != expect || !mel.frames.is_finite() {
                return Err(crate::Error::shape("front-end framing disagrees"));
            }
            unvoiced += f0.frames.iter().filter(|f| !f.voiced).count();
            frames += f0.len();
            Ok(())
        })();
        if let Err(e) = res {
            failures.push(format!("{}: {e}", r.utterance_id));
        }
    }
    Ok(Check::new(
        "manifest front-end",
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} files, {frames} frames, {unvoiced} unvoiced",
                manifest.records.len()
            )
        } else {
            failures.join("; ")
        },
    ))
}

fn serialization_checks(seed: u64) -> Result<Vec<Check>> {
    let cfg = ModelConfig::desk();
    let store = init_params(&cfg, seed)?;
    let bytes = store.to_bytes();
    let back = ParamStore::from_bytes(&bytes)?;
    let exact = back == store.quantized() && back.to_bytes() == bytes;
    let audio = sine(180.0, 0.5, 22050, 0.5);
    let a = SpeakerModel::from_store(&store, &cfg)?.embed(&audio)?;
    let b = SpeakerModel::from_store(&back, &cfg)?.embed(&audio)?;
    let scale = a.vector.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let drift = a
        .vector
        .iter()
        .zip(&b.vector)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale;
    Ok(vec![
        Check::new(
            "weight round trip",
            exact,
            format!("{} tensors, {} bytes", store.len(), bytes.len()),
        ),
        Check::new(
            "f32 storage drift",
            drift <= 1e-5,
            format!("relative embedding drift {drift:.3e}"),
        ),
    ])
}

fn weight_file_check(path: &Path) -> Result<Check> {
    let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    let store = ParamStore::from_bytes(&bytes)?;
    Ok(Check::new(
        "weight file",
        store.to_bytes() == bytes,
        format!(
            "{} tensors, {} parameters, re-encoding identical",
            store.len(),
            store.total_parameters()
        ),
    ))
}

/// Every built-in check. Errors from the weight file or manifest abort the run.
pub fn run_checks(weights: Option<&Path>, manifest: Option<&Path>, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    if let Some(w) = weights {
        checks.push(weight_file_check(w)?);
    }
    checks.extend(attention_checks(seed)?);
    checks.push(tail_checks(seed)?);
    checks.extend(dsp_checks()?);
    if let Some(m) = manifest {
        checks.push(manifest_checks(m)?);
    }
    checks.extend(serialization_checks(seed)?);
    Ok(checks)
}
