//! Brute-force reference implementations used only by the integration tests.
//!
//! Everything here is written with plain nested loops over `Vec<Vec<f64>>` and reads
//! parameters from a `ParamStore` by name, so it shares no numeric code with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use agv::nn::Tensor;
use agv::weights::ParamStore;
use agv::{Mode, ModelConfig};
use rand::Rng;

pub type M = Vec<Vec<f64>>;

pub fn rand_m(rng: &mut impl Rng, r: usize, c: usize) -> M {
    (0..r).map(|_| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

pub fn to_tensor(m: &M) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

pub fn from_tensor(t: &Tensor) -> M {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn max_diff(a: &M, b: &M) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len(), "column count");
        for (x, y) in ra.iter().zip(rb) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

pub fn max_diff_vec(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn p<'a>(store: &'a ParamStore, name: &str) -> &'a Tensor {
    store.get(name).unwrap_or_else(|_| panic!("missing {name}"))
}

/// `y[t][o] = b[o] + Σ_i x[t][i]·W[i][o]` with `W` stored `in × out`.
pub fn linear_raw(x: &M, w: &Tensor, b: &Tensor) -> M {
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|row| {
            assert_eq!(row.len(), n_in);
            (0..n_out)
                .map(|o| {
                    let mut s = b.data()[o];
                    for i in 0..n_in {
                        s += row[i] * w.data()[i * n_out + o];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn linear(x: &M, store: &ParamStore, prefix: &str) -> M {
    linear_raw(
        x,
        p(store, &format!("{prefix}.weight")),
        p(store, &format!("{prefix}.bias")),
    )
}

/// Zero-padded "same" convolution; kernel stored `out × in × taps`.
pub fn conv_raw(x: &M, w: &Tensor, b: &Tensor, dilation: usize) -> M {
    let (c_out, c_in, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let t_len = x.len() as isize;
    let half = (k / 2) as isize;
    (0..x.len())
        .map(|t| {
            (0..c_out)
                .map(|o| {
                    let mut s = b.data()[o];
                    for tap in 0..k {
                        let src = t as isize + (tap as isize - half) * dilation as isize;
                        if src < 0 || src >= t_len {
                            continue;
                        }
                        for i in 0..c_in {
                            s += w.data()[(o * c_in + i) * k + tap] * x[src as usize][i];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn conv(x: &M, store: &ParamStore, prefix: &str, dilation: usize) -> M {
    conv_raw(
        x,
        p(store, &format!("{prefix}.weight")),
        p(store, &format!("{prefix}.bias")),
        dilation,
    )
}

pub fn relu(x: &M) -> M {
    x.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn temporal_mean(x: &M) -> Vec<f64> {
    let c = x[0].len();
    (0..c).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / x.len() as f64).collect()
}

/// Returns `(output, weights)`; `divisor` is applied to every logit.
pub fn attention(q: &M, k: &M, v: &M, divisor: f64) -> (M, M) {
    let mut out = Vec::new();
    let mut weights = Vec::new();
    for qi in q {
        let logits: Vec<f64> = k
            .iter()
            .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / divisor)
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        let w: Vec<f64> = e.iter().map(|x| x / z).collect();
        let dv = v[0].len();
        let mut o = vec![0.0; dv];
        for (j, wj) in w.iter().enumerate() {
            for c in 0..dv {
                o[c] += wj * v[j][c];
            }
        }
        out.push(o);
        weights.push(w);
    }
    (out, weights)
}

fn cols(x: &M, start: usize, n: usize) -> M {
    x.iter().map(|r| r[start..start + n].to_vec()).collect()
}

/// Multi-head attention with full-width projections split into `heads` slices.
pub fn mha(query: &M, keys: &M, values: &M, heads: usize, store: &ParamStore, prefix: &str) -> M {
    let qp = linear(query, store, &format!("{prefix}.q"));
    let kp = linear(keys, store, &format!("{prefix}.k"));
    let vp = linear(values, store, &format!("{prefix}.v"));
    mha_projected(&qp, &kp, &vp, heads, |c| linear(c, store, &format!("{prefix}.o")))
}

pub fn mha_projected(qp: &M, kp: &M, vp: &M, heads: usize, out_proj: impl Fn(&M) -> M) -> M {
    let d = qp[0].len();
    let hd = d / heads;
    let mut concat: M = vec![Vec::new(); qp.len()];
    for h in 0..heads {
        let (o, _) = attention(
            &cols(qp, h * hd, hd),
            &cols(kp, h * hd, hd),
            &cols(vp, h * hd, hd),
            (hd as f64).sqrt(),
        );
        for (row, part) in concat.iter_mut().zip(o) {
            row.extend(part);
        }
    }
    out_proj(&concat)
}

pub fn se(x: &M, store: &ParamStore, prefix: &str) -> M {
    let s = vec![temporal_mean(x)];
    let e = linear(&relu(&linear(&s, store, &format!("{prefix}.fc1"))), store, &format!("{prefix}.fc2"));
    x.iter()
        .map(|r| r.iter().zip(&e[0]).map(|(v, g)| v * sigmoid(*g)).collect())
        .collect()
}

/// One SE-Res2 block: 1×1 in, hierarchical group convolutions, 1×1 out, SE, residual.
pub fn res2(x: &M, store: &ParamStore, prefix: &str, scale: usize, dilation: usize) -> M {
    let c = x[0].len();
    let w = c / scale;
    let h = conv(x, store, &format!("{prefix}.conv_in"), 1);
    let mut groups: Vec<M> = vec![cols(&h, 0, w)];
    for g in 1..scale {
        let part = cols(&h, g * w, w);
        let prev = &groups[g - 1];
        let summed: M = part
            .iter()
            .zip(prev)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        groups.push(relu(&conv(&summed, store, &format!("{prefix}.res2.conv{}", g + 1), dilation)));
    }
    let cat: M = (0..x.len())
        .map(|t| groups.iter().flat_map(|g| g[t].clone()).collect())
        .collect();
    let branch = se(&conv(&cat, store, &format!("{prefix}.conv_out"), 1), store, &format!("{prefix}.se"));
    x.iter()
        .zip(&branch)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect()
}

/// Channel-wise attentive statistics: `[μ; σ]` of length `2C`.
pub fn pool(h: &M, store: &ParamStore, prefix: &str) -> Vec<f64> {
    let hidden: M = linear(h, store, &format!("{prefix}.attn1"))
        .into_iter()
        .map(|r| r.into_iter().map(f64::tanh).collect())
        .collect();
    let logits = linear(&hidden, store, &format!("{prefix}.attn2"));
    let (t, c) = (h.len(), h[0].len());
    let mut mu = vec![0.0; c];
    let mut sd = vec![0.0; c];
    for j in 0..c {
        let mx = (0..t).map(|i| logits[i][j]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..t).map(|i| (logits[i][j] - mx).exp()).sum();
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..t {
            let a = (logits[i][j] - mx).exp() / z;
            m1 += a * h[i][j];
            m2 += a * h[i][j] * h[i][j];
        }
        mu[j] = m1;
        sd[j] = (m2 - m1 * m1).max(1e-9).sqrt();
    }
    mu.extend(sd);
    mu
}

pub const N_FFT: usize = 1024;
pub const HOP: usize = 256;
pub const SR: f64 = 22050.0;

pub fn n_frames(n: usize) -> usize {
    (n - N_FFT) / HOP + 1
}

/// Direct DFT magnitudes of one periodic-Hann-windowed frame, bins `0..=N/2`.
pub fn dft_magnitude(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let cos: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let sin: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).sin()).collect();
    let windowed: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(i, x)| x * 0.5 * (1.0 - cos[i]))
        .collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in windowed.iter().enumerate() {
                let idx = (k * i) % n;
                re += x * cos[idx];
                im -= x * sin[idx];
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

fn slaney_mel(hz: f64) -> f64 {
    if hz < 1000.0 {
        3.0 * hz / 200.0
    } else {
        15.0 + 27.0 * (hz / 1000.0).ln() / 6.4f64.ln()
    }
}

fn slaney_hz(mel: f64) -> f64 {
    if mel < 15.0 {
        200.0 * mel / 3.0
    } else {
        1000.0 * (6.4f64.ln() * (mel - 15.0) / 27.0).exp()
    }
}

/// 80 area-normalized triangles between 0 and 8 kHz.
pub fn mel_weights() -> M {
    let n_mels = 80;
    let hi = slaney_mel(8000.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| slaney_hz(hi * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..=N_FFT / 2)
                .map(|k| {
                    let f = k as f64 * SR / N_FFT as f64;
                    let tri = if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    };
                    tri * 2.0 / (r - l)
                })
                .collect()
        })
        .collect()
}

pub fn log_mel(samples: &[f64]) -> M {
    let fb = mel_weights();
    (0..n_frames(samples.len()))
        .map(|t| {
            let mag = dft_magnitude(&samples[t * HOP..t * HOP + N_FFT]);
            fb.iter()
                .map(|row| row.iter().zip(&mag).map(|(w, m)| w * m).sum::<f64>().max(1e-5).ln())
                .collect()
        })
        .collect()
}

/// YIN per frame: `(f0_hz, voiced)`.
pub fn yin(samples: &[f64]) -> Vec<(f64, bool)> {
    let w = N_FFT / 2;
    (0..n_frames(samples.len()))
        .map(|t| {
            let x = &samples[t * HOP..t * HOP + N_FFT];
            let mut d = vec![0.0; w + 1];
            for tau in 1..=w {
                for j in 0..w {
                    d[tau] += (x[j] - x[j + tau]).powi(2);
                }
            }
            let mut nd = vec![1.0; w + 1];
            let mut acc = 0.0;
            for tau in 1..=w {
                acc += d[tau];
                nd[tau] = if acc > 0.0 { d[tau] * tau as f64 / acc } else { 1.0 };
            }
            let lo = (SR / 500.0).ceil() as usize;
            let hi = ((SR / 60.0).floor() as usize).min(w - 1);
            let mut tau = None;
            for cand in lo..=hi {
                if nd[cand] < 0.15 {
                    let mut c = cand;
                    while c < hi && nd[c + 1] < nd[c] {
                        c += 1;
                    }
                    tau = Some(c);
                    break;
                }
            }
            let tau = tau.unwrap_or_else(|| {
                let mut best = lo;
                for c in lo..=hi {
                    if nd[c] < nd[best] {
                        best = c;
                    }
                }
                best
            });
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
            if nd[tau] > 0.5 || rms < 1e-4 {
                return (0.0, false);
            }
            let (a, b, c) = (nd[tau - 1], nd[tau], nd[tau + 1]);
            let curv = a - 2.0 * b + c;
            let shift = if curv > 0.0 { (0.5 * (a - c) / curv).clamp(-1.0, 1.0) } else { 0.0 };
            let period = (tau as f64 + shift).clamp(SR / 500.0, SR / 60.0);
            (SR / period, true)
        })
        .collect()
}

pub fn backbone(mel: &M, store: &ParamStore, cfg: &ModelConfig) -> (M, Vec<f64>) {
    let b = &cfg.backbone;
    let mut x = relu(&conv(mel, store, "backbone.input", 1));
    let mut outs = Vec::new();
    for (i, &dil) in b.dilations.iter().enumerate() {
        x = res2(&x, store, &format!("backbone.block{}", i + 1), b.scale, dil);
        outs.push(x.clone());
    }
    let cat: M = (0..mel.len())
        .map(|t| outs.iter().flat_map(|o| o[t].clone()).collect())
        .collect();
    let m = conv(&cat, store, "backbone.mfa", 1);
    let h_sv = linear(&m, store, "backbone.frame_proj");
    let stats = pool(&m, store, "backbone.pool");
    let z = linear(&vec![stats], store, "backbone.pool_proj").remove(0);
    (h_sv, z)
}

pub fn encode_f0(f0: &[(f64, bool)], store: &ParamStore) -> M {
    let feats: M = f0
        .iter()
        .map(|&(hz, v)| if v { vec![(hz / 100.0).ln(), 1.0] } else { vec![0.0, 0.0] })
        .collect();
    linear(&relu(&linear(&feats, store, "agg.f0_enc.fc1")), store, "agg.f0_enc.fc2")
}

pub fn encode_mel(mel: &M, store: &ParamStore) -> M {
    let h = relu(&linear(mel, store, "agg.mel_enc.fc1"));
    let h = relu(&linear(&h, store, "agg.mel_enc.fc2"));
    let y = conv(&h, store, "agg.mel_enc.glu", 1);
    let half = y[0].len() / 2;
    y.iter()
        .map(|r| (0..half).map(|j| r[j] * sigmoid(r[half + j])).collect())
        .collect()
}

pub fn cross(query: &M, kv: &M, store: &ParamStore, level: usize, divisor: f64) -> M {
    let pre = format!("agg.level{level}");
    let q = linear(query, store, &format!("{pre}.q"));
    let k = linear(kv, store, &format!("{pre}.k"));
    let v = linear(kv, store, &format!("{pre}.v"));
    attention(&q, &k, &v, divisor).0
}

/// Whole pipeline from canonical-rate samples to the embedding vector.
pub fn embed(samples: &[f64], store: &ParamStore, cfg: &ModelConfig) -> Vec<f64> {
    let mel = log_mel(samples);
    let f0 = yin(samples);
    let (h_sv, z) = backbone(&mel, store, cfg);
    let agg = &cfg.aggregation;
    if agg.mode == Mode::Se {
        return z;
    }
    let d = cfg.backbone.d_model as f64;
    let div = match agg.scale_mode {
        agv::nn::ScaleMode::Sqrt => d.sqrt(),
        agv::nn::ScaleMode::Linear => d,
    };
    let t = h_sv.len().min(mel.len()).min(f0.len());
    let h_sv = h_sv[..t].to_vec();
    let h_f0 = agg.mode.uses_f0().then(|| encode_f0(&f0[..t], store));
    let h_me = agg.mode.uses_mel().then(|| encode_mel(&mel[..t].to_vec(), store));
    let h = match agg.mode {
        Mode::SeF0 => cross(&h_sv, h_f0.as_ref().unwrap(), store, 1, div),
        Mode::SeMe => cross(&h_sv, h_me.as_ref().unwrap(), store, 1, div),
        Mode::SeF0ThenMe => {
            let l1 = cross(&h_sv, h_f0.as_ref().unwrap(), store, 1, div);
            cross(h_me.as_ref().unwrap(), &l1, store, 2, div)
        }
        Mode::SeMeThenF0 => {
            let l1 = cross(&h_sv, h_me.as_ref().unwrap(), store, 1, div);
            cross(h_f0.as_ref().unwrap(), &l1, store, 2, div)
        }
        Mode::Se => unreachable!(),
    };
    let pooled = vec![temporal_mean(&h)];
    if !agg.splitting {
        return pooled.into_iter().next().unwrap();
    }
    let tokens = from_tensor(store.get("agg.tokens").unwrap());
    mha(&pooled, &tokens, &tokens, agg.heads, store, "agg.fuse").remove(0)
}
