//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use agv::aggregation::CrossAttention;
use agv::audio::{write_wav_pcm16, AudioBuffer};
use agv::backbone::{AttentiveStatsPool, Res2Block, SeBlock};
use agv::dsp::{mel_spectrogram, yin_f0};
use agv::eval::{diagonal_dominance, grouped_cross_similarity, mel_stats_embedding};
use agv::nn::{attention_backward, scaled_dot_attention, Conv1d, Linear, MultiHeadAttention, ScaleMode, Tensor};
use agv::synth::{silence, sine, speaker_templates};
use agv::weights::ParamStore;
use agv::{init_params, Error, Mode, ModelConfig, SpeakerModel};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn c1_tone_suite() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 1.0;
    for hz in [110.0, 220.0, 440.0] {
        let f0 = yin_f0(&sine(hz, 1.0, 22050, 0.5)).map_err(|e| e.to_string())?;
        let interior = &f0.frames[1..f0.len() - 1];
        let good = interior
            .iter()
            .filter(|f| f.voiced && (f.f0_hz - hz).abs() < 0.5)
            .count();
        worst = worst.min(good as f64 / interior.len() as f64);
    }
    let quiet = yin_f0(&silence(1.0, 22050)).map_err(|e| e.to_string())?;
    let unvoiced = quiet.frames.iter().filter(|f| !f.voiced).count() as f64 / quiet.len() as f64;
    let t = start.elapsed();
    check(
        worst >= 0.95 && unvoiced == 1.0 && within(t, 5.0),
        format!(
            "worst in-tolerance fraction {worst:.3}, silence unvoiced {:.0}%, {:.2} s",
            100.0 * unvoiced,
            t.as_secs_f64()
        ),
    )
}

fn c2_framing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = Vec::new();
    for _ in 0..50 {
        let n = rng.gen_range(1024..40_000);
        let buf = AudioBuffer::new((0..n).map(|_| rng.gen_range(-0.9..0.9)).collect(), 22050)
            .map_err(|e| e.to_string())?;
        let expect = (n - 1024) / 256 + 1;
        let mel = mel_spectrogram(&buf).map_err(|e| e.to_string())?.n_frames();
        let f0 = yin_f0(&buf).map_err(|e| e.to_string())?.len();
        if mel != expect || f0 != expect {
            bad.push(format!("n={n}: mel {mel}, f0 {f0}, want {expect}"));
        }
    }
    check(bad.is_empty(), format!("50 random lengths, {} mismatches {bad:?}", bad.len()))
}

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn rand_linear(rng: &mut ChaCha8Rng, store: &mut Vec<(String, Tensor)>, name: &str, i: usize, o: usize) -> Linear {
    let w = rand_t(rng, &[i, o]);
    let b = rand_t(rng, &[o]);
    store.push((format!("{name}.weight"), w.clone()));
    store.push((format!("{name}.bias"), b.clone()));
    Linear::new(w, b).unwrap()
}

fn rand_conv(
    rng: &mut ChaCha8Rng,
    store: &mut Vec<(String, Tensor)>,
    name: &str,
    o: usize,
    i: usize,
    k: usize,
    dil: usize,
) -> Conv1d {
    let w = rand_t(rng, &[o, i, k]);
    let b = rand_t(rng, &[o]);
    store.push((format!("{name}.weight"), w.clone()));
    store.push((format!("{name}.bias"), b.clone()));
    Conv1d::new(w, b, dil).unwrap()
}

fn as_store(entries: Vec<(String, Tensor)>) -> ParamStore {
    ParamStore::from_entries(
        entries.into_iter().collect(),
        agv::weights::ParamMeta {
            seed: 0,
            config_digest: String::new(),
            format_version: 1,
        },
    )
}

fn c3_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 4];
    for case in 0..100 {
        // scaled dot-product attention
        let (tq, tk, d, dv) = (
            rng.gen_range(1..9),
            rng.gen_range(1..9),
            rng.gen_range(1..17),
            rng.gen_range(1..17),
        );
        let (q, k, v) = (rand_m(&mut rng, tq, d), rand_m(&mut rng, tk, d), rand_m(&mut rng, tk, dv));
        let mode = if case % 2 == 0 { ScaleMode::Sqrt } else { ScaleMode::Linear };
        let lib = scaled_dot_attention(&to_tensor(&q), &to_tensor(&k), &to_tensor(&v), mode).unwrap();
        let (out, w) = attention(&q, &k, &v, mode.divisor(d));
        worst[0] = worst[0]
            .max(max_diff(&from_tensor(&lib.output), &out))
            .max(max_diff(&from_tensor(&lib.weights), &w));

        // multi-head attention
        let heads = [1, 2, 4][case % 3];
        let dm = heads * rng.gen_range(1..5);
        let (tq, tk) = (rng.gen_range(1..5), rng.gen_range(1..9));
        let mut entries = Vec::new();
        let mha = MultiHeadAttention::new(
            heads,
            rand_linear(&mut rng, &mut entries, "m.q", dm, dm),
            rand_linear(&mut rng, &mut entries, "m.k", dm, dm),
            rand_linear(&mut rng, &mut entries, "m.v", dm, dm),
            rand_linear(&mut rng, &mut entries, "m.o", dm, dm),
        )
        .unwrap();
        let store = as_store(entries);
        let (qq, kk, vv) = (rand_m(&mut rng, tq, dm), rand_m(&mut rng, tk, dm), rand_m(&mut rng, tk, dm));
        let lib = mha.forward(&to_tensor(&qq), &to_tensor(&kk), &to_tensor(&vv)).unwrap();
        worst[1] = worst[1].max(max_diff(&from_tensor(&lib.output), &common::mha(&qq, &kk, &vv, heads, &store, "m")));

        // SE-Res2 block
        let scale = [2, 4, 8][case % 3];
        let c = scale * rng.gen_range(1..4);
        let b = (c / 2).max(1);
        let dil = rng.gen_range(1..5);
        let t = rng.gen_range(1..12);
        let mut entries = Vec::new();
        let block = Res2Block {
            conv_in: rand_conv(&mut rng, &mut entries, "r.conv_in", c, c, 1, 1),
            convs: (2..=scale)
                .map(|j| rand_conv(&mut rng, &mut entries, &format!("r.res2.conv{j}"), c / scale, c / scale, 3, dil))
                .collect(),
            conv_out: rand_conv(&mut rng, &mut entries, "r.conv_out", c, c, 1, 1),
            se: SeBlock {
                fc1: rand_linear(&mut rng, &mut entries, "r.se.fc1", c, b),
                fc2: rand_linear(&mut rng, &mut entries, "r.se.fc2", b, c),
            },
            scale,
        };
        let store = as_store(entries);
        let x = rand_m(&mut rng, t, c);
        let lib = block.forward(&to_tensor(&x)).unwrap();
        worst[2] = worst[2].max(max_diff(&from_tensor(&lib), &res2(&x, &store, "r", scale, dil)));

        // attentive statistics pooling
        let mut entries = Vec::new();
        let pool = AttentiveStatsPool {
            attn1: rand_linear(&mut rng, &mut entries, "p.attn1", c, b),
            attn2: rand_linear(&mut rng, &mut entries, "p.attn2", b, c),
        };
        let store = as_store(entries);
        let lib = pool.forward(&to_tensor(&x)).unwrap();
        worst[3] = worst[3].max(max_diff_vec(lib.data(), &common::pool(&x, &store, "p")));
    }
    let t = start.elapsed();
    check(
        worst.iter().all(|&w| w <= 1e-10) && within(t, 30.0),
        format!(
            "100 shapes each; worst |diff| attention {:.1e}, mha {:.1e}, res2 {:.1e}, pooling {:.1e}; {:.2} s",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            t.as_secs_f64()
        ),
    )
}

/// Worst `|a−n| / max(|a|, |n|, floor/tol)` between the analytic attention gradient and
/// central differences of `Σ out ⊙ g`, optionally with the largest analytic entry negated.
fn fd_attention_error(q: &M, k: &M, v: &M, g: &M, divisor_mode: ScaleMode, flip: bool) -> f64 {
    let (tol, floor, h) = (1e-6, 1e-8, 1e-5);
    let (qt, kt, vt) = (to_tensor(q), to_tensor(k), to_tensor(v));
    let trace = scaled_dot_attention(&qt, &kt, &vt, divisor_mode).unwrap();
    let grads = attention_backward(&trace, &qt, &kt, &vt, &to_tensor(g)).unwrap();
    let mut analytic: Vec<f64> = [grads.dq.data(), grads.dk.data(), grads.dv.data()].concat();
    if flip {
        let i = (0..analytic.len())
            .max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()))
            .unwrap();
        analytic[i] = -analytic[i];
    }
    let d = q[0].len();
    let objective = |q: &M, k: &M, v: &M| -> f64 {
        let (out, _) = attention(q, k, v, divisor_mode.divisor(d));
        out.iter().flatten().zip(g.iter().flatten()).map(|(a, b)| a * b).sum()
    };
    let mut numeric = Vec::new();
    for which in 0..3 {
        let base = [q, k, v][which];
        for r in 0..base.len() {
            for c in 0..base[0].len() {
                let mut plus = [q.clone(), k.clone(), v.clone()];
                let mut minus = plus.clone();
                plus[which][r][c] += h;
                minus[which][r][c] -= h;
                let fp = objective(&plus[0], &plus[1], &plus[2]);
                let fm = objective(&minus[0], &minus[1], &minus[2]);
                numeric.push((fp - fm) / (2.0 * h));
            }
        }
    }
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor / tol))
        .fold(0.0, f64::max)
}

fn c4_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut weakest_control = f64::INFINITY;
    for i in 0..20 {
        let (tq, tk, d, dv) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..7), rng.gen_range(1..7));
        let (q, k, v, g) = (
            rand_m(&mut rng, tq, d),
            rand_m(&mut rng, tk, d),
            rand_m(&mut rng, tk, dv),
            rand_m(&mut rng, tq, dv),
        );
        let mode = if i % 2 == 0 { ScaleMode::Sqrt } else { ScaleMode::Linear };
        worst = worst.max(fd_attention_error(&q, &k, &v, &g, mode, false));
        weakest_control = weakest_control.min(fd_attention_error(&q, &k, &v, &g, mode, true));
    }
    let t = start.elapsed();
    check(
        worst <= 1e-6 && weakest_control > 1e-2 && within(t, 30.0),
        format!(
            "20 instances, worst relative error {worst:.2e}; sign-flip control min error {weakest_control:.2e}; {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn c5_convexity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut coords = 0;
    for i in 0..100 {
        let (tq, tk, d, dv) = (rng.gen_range(1..8), rng.gen_range(1..8), rng.gen_range(1..9), rng.gen_range(1..9));
        let spread = [1.0, 10.0, 100.0][i % 3];
        let q = rand_t(&mut rng, &[tq, d]).map(|x| x * spread);
        let k = rand_t(&mut rng, &[tk, d]);
        let v = rand_t(&mut rng, &[tk, dv]);
        let mode = if i % 2 == 0 { ScaleMode::Sqrt } else { ScaleMode::Linear };
        let out = scaled_dot_attention(&q, &k, &v, mode).unwrap().output;
        for c in 0..dv {
            let col: Vec<f64> = (0..tk).map(|r| v.at(r, c)).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for r in 0..tq {
                coords += 1;
                let x = out.at(r, c);
                if x < lo || x > hi {
                    violations += 1;
                }
            }
        }
    }
    check(violations == 0, format!("100 calls, {coords} coordinates, {violations} violations"))
}

fn c6_singleton_key() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut entries = Vec::new();
    let layer = CrossAttention {
        q: rand_linear(&mut rng, &mut entries, "q", 8, 8),
        k: rand_linear(&mut rng, &mut entries, "k", 8, 8),
        v: rand_linear(&mut rng, &mut entries, "v", 8, 8),
        scale_mode: ScaleMode::Sqrt,
    };
    let prompt = rand_t(&mut rng, &[1, 8]);
    let outputs: Vec<Vec<f64>> = (0..10)
        .map(|_| {
            let query = rand_t(&mut rng, &[1, 8]).map(|x| 5.0 * x);
            layer.forward(&query, &prompt).unwrap().output().row(0).to_vec()
        })
        .collect();
    let spread = outputs
        .iter()
        .map(|o| max_diff_vec(o, &outputs[0]))
        .fold(0.0, f64::max);
    check(spread <= 1e-12, format!("max spread over 10 queries {spread:.1e}"))
}

fn c7_modes() -> Outcome {
    let start = Instant::now();
    let audio = speaker_templates()[0].utterance(0, 0.5);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut full_pipeline = f64::NAN;
    for mode in Mode::ALL {
        for split in [true, false] {
            let cfg = ModelConfig::desk().with_mode(mode, split);
            let store = init_params(&cfg, 7).map_err(|e| e.to_string())?;
            let e = SpeakerModel::from_store(&store, &cfg)
                .and_then(|m| m.embed(&audio))
                .map_err(|e| format!("{mode} split={split}: {e}"))?;
            let reference = common::embed(audio.samples(), &store, &cfg);
            let diff = max_diff_vec(&e.vector, &reference);
            let finite = e.vector.iter().all(|v| v.is_finite());
            ok &= finite && e.dim() == 8 && diff <= 1e-8;
            if mode == Mode::SeF0ThenMe && split {
                full_pipeline = diff;
            }
            lines.push(format!("{mode}/{}:{diff:.0e}", if split { "split" } else { "mean" }));
        }
    }
    check(
        ok,
        format!(
            "10 configs finite, d=8; full pipeline vs composed oracle {full_pipeline:.1e} (all: {}); {:.2} s",
            lines.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn agv_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agv"))
}

const DESK: [&str; 8] = ["--channels", "16", "--dmodel", "8", "--tokens", "2", "--heads", "2"];

fn write_manifest(dir: &Path, utterances: &[(String, String, AudioBuffer)]) -> std::path::PathBuf {
    let mut lines = String::new();
    for (id, speaker, audio) in utterances {
        let file = format!("{id}.wav");
        write_wav_pcm16(dir.join(&file), audio).unwrap();
        lines.push_str(&format!(
            "{{\"path\":\"{file}\",\"utterance_id\":\"{id}\",\"speaker_id\":\"{speaker}\",\"language\":\"xx\"}}\n"
        ));
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, lines).unwrap();
    path
}

fn run_embed(manifest: &Path, out: &Path, seed: &str, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let status = agv_bin()
        .args(["embed", "--manifest"])
        .arg(manifest)
        .arg("--out")
        .arg(out)
        .args(["--seed", seed])
        .args(DESK)
        .env("AGV_NUM_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    Ok(files)
}

fn c8_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let templates = speaker_templates();
    let utts: Vec<_> = (0..5)
        .map(|i| {
            let t = &templates[i % templates.len()];
            (format!("utt{i}"), t.id.clone(), t.utterance(i, 0.4))
        })
        .collect();
    let manifest = write_manifest(dir.path(), &utts);
    let a = run_embed(&manifest, &dir.path().join("a"), "11", "1")?;
    let b = run_embed(&manifest, &dir.path().join("b"), "11", "4")?;
    let c = run_embed(&manifest, &dir.path().join("c"), "12", "1")?;
    let n_embeddings = a.iter().filter(|(n, _)| n.starts_with("utt")).count();
    let changed = a
        .iter()
        .zip(&c)
        .filter(|(x, y)| x.0.starts_with("utt") && x.1 != y.1)
        .count();
    check(
        n_embeddings == 5 && a == b && changed > 0,
        format!(
            "{n_embeddings} embedding files; same seed (1 vs 4 workers) identical: {}; other seed changed {changed}/5",
            a == b
        ),
    )
}

fn c9_similarity() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut utts = Vec::new();
    let mut speakers = Vec::new();
    let mut baseline = Vec::new();
    for t in speaker_templates() {
        for u in 0..3 {
            let audio = t.utterance(u, 1.0);
            baseline.push(mel_stats_embedding(&mel_spectrogram(&audio).map_err(|e| e.to_string())?));
            speakers.push(t.id.clone());
            utts.push((format!("{}_{u}", t.id), t.id.clone(), audio));
        }
    }
    let grouped = grouped_cross_similarity(&speakers, &baseline).map_err(|e| e.to_string())?;
    let dominance = diagonal_dominance(&grouped).map_err(|e| e.to_string())?;

    let manifest = write_manifest(dir.path(), &utts);
    let emb = dir.path().join("emb");
    run_embed(&manifest, &emb, "0", "2")?;
    let prefix = dir.path().join("sim");
    let out = agv_bin()
        .args(["simmatrix", "--index"])
        .arg(emb.join("index.json"))
        .arg("--out")
        .arg(&prefix)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let csv = std::fs::read_to_string(dir.path().join("sim.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let csv_ok = rows.len() == 13
        && rows.iter().all(|r| r.len() == 13)
        && rows[1..].iter().all(|r| {
            r[1..]
                .iter()
                .all(|v| v.parse::<f64>().map(|x| (-1.0..=1.0).contains(&x)).unwrap_or(false))
        });
    let pgm = std::fs::read(dir.path().join("sim.pgm")).map_err(|e| e.to_string())?;
    let header = b"P5\n12 12\n255\n";
    let pgm_ok = pgm.starts_with(header) && pgm.len() == header.len() + 144;
    let t = start.elapsed();
    check(
        dominance >= 0.75 && csv_ok && pgm_ok && within(t, 60.0),
        format!(
            "mel-statistics dominance {dominance:.2} on 4x4; 12x12 CSV ok {csv_ok}, PGM ok {pgm_ok}; {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn c10_serialization() -> Outcome {
    let cfg = ModelConfig::desk();
    let store = init_params(&cfg, 10).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.agvw");
    store.save(&path).map_err(|e| e.to_string())?;
    let first = std::fs::read(&path).unwrap();
    let loaded = ParamStore::load(&path).map_err(|e| e.to_string())?;
    let path2 = dir.path().join("w2.agvw");
    loaded.save(&path2).map_err(|e| e.to_string())?;
    let bit_exact = std::fs::read(&path2).unwrap() == first
        && loaded.iter().zip(store.iter()).all(|((n1, a), (n2, b))| {
            n1 == n2 && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == f64::from(*y as f32).to_bits())
        });

    let audio = speaker_templates()[3].utterance(1, 0.5);
    let e0 = SpeakerModel::from_store(&store, &cfg).and_then(|m| m.embed(&audio)).map_err(|e| e.to_string())?;
    let e1 = SpeakerModel::from_store(&loaded, &cfg).and_then(|m| m.embed(&audio)).map_err(|e| e.to_string())?;
    let norm = e0.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    let drift = e0.vector.iter().zip(&e1.vector).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm;

    let mut bad_magic = first.clone();
    bad_magic[3] ^= 0xff;
    let truncated = first[..first.len() - 7].to_vec();
    let mut edited = first.clone();
    let from = b"\"shape\":[16,80,1]";
    let at = edited.windows(from.len()).position(|w| w == from).ok_or("shape not found")?;
    edited[at..at + from.len()].copy_from_slice(b"\"shape\":[16,81,1]");
    let r1 = matches!(ParamStore::from_bytes(&bad_magic), Err(Error::BadMagic { .. }));
    let r2 = matches!(ParamStore::from_bytes(&truncated), Err(Error::TruncatedPayload { .. }));
    let r3 = matches!(ParamStore::from_bytes(&edited), Err(Error::HeaderMismatch(_)));
    check(
        bit_exact && drift <= 1e-5 && r1 && r2 && r3,
        format!(
            "round trip bit-exact {bit_exact}; f32 drift {drift:.1e}; BadMagic {r1}, TruncatedPayload {r2}, HeaderMismatch {r3}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("DSP tone suite", c1_tone_suite),
        ("framing alignment", c2_framing),
        ("attention oracle equivalence", c3_oracles),
        ("gradient verification", c4_gradients),
        ("convexity invariant", c5_convexity),
        ("singleton-key degeneracy", c6_singleton_key),
        ("mode matrix", c7_modes),
        ("determinism", c8_determinism),
        ("similarity matrix mechanism", c9_similarity),
        ("serialization", c10_serialization),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
