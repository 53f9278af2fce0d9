//! Scaled dot-product attention with its analytic backward pass, plus multi-head attention.

use serde::{Deserialize, Serialize};

use super::ops::{AffineGrads, Linear};
use super::{softmax_rows, Tensor};
use crate::error::{Error, Result};

/// Divisor applied to `QKᵀ` before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// `√d`, the conventional scaled dot product.
    #[default]
    Sqrt,
    /// `d`, the literal reading of a `d^k` denominator.
    Linear,
}

impl ScaleMode {
    pub fn divisor(self, d: usize) -> f64 {
        match self {
            ScaleMode::Sqrt => (d as f64).sqrt(),
            ScaleMode::Linear => d as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScaleMode::Sqrt => "sqrt",
            ScaleMode::Linear => "linear",
        }
    }
}

impl std::str::FromStr for ScaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(ScaleMode::Sqrt),
            "linear" => Ok(ScaleMode::Linear),
            other => Err(Error::InvalidConfig(format!("unknown scale mode `{other}`"))),
        }
    }
}

/// Everything a forward attention call produced; enough to run the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub output: Tensor,
    /// Row-stochastic `Tq × Tk` matrix.
    pub weights: Tensor,
    pub logits: Tensor,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dq: Tensor,
    pub dk: Tensor,
    pub dv: Tensor,
}

pub fn scaled_dot_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mode: ScaleMode,
) -> Result<AttentionTrace> {
    let (_, d) = q.expect_matrix("attention Q")?;
    let (tk, dk) = k.expect_matrix("attention K")?;
    let (tv, _) = v.expect_matrix("attention V")?;
    if d != dk || tk != tv {
        return Err(Error::shape(format!(
            "attention Q {:?}, K {:?}, V {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let scale = mode.divisor(d);
    let logits = q.matmul(&k.transpose()?)?.map(|x| x / scale);
    let weights = softmax_rows(&logits);
    let output = weights.matmul(v)?;
    Ok(AttentionTrace {
        output,
        weights,
        logits,
        scale,
    })
}

/// Gradients of `Σ output ⊙ d_out` with respect to `Q`, `K` and `V`.
pub fn attention_backward(
    trace: &AttentionTrace,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    d_out: &Tensor,
) -> Result<AttentionGrads> {
    if d_out.shape() != trace.output.shape() {
        return Err(Error::shape(format!(
            "d_out {:?} vs output {:?}",
            d_out.shape(),
            trace.output.shape()
        )));
    }
    let p = &trace.weights;
    if p.rows() != q.rows() || p.cols() != k.rows() || v.rows() != k.rows() {
        return Err(Error::shape("trace does not match Q/K/V"));
    }
    let dv = p.transpose()?.matmul(d_out)?;
    let dp = d_out.matmul(&v.transpose()?)?;

    // softmax Jacobian, row by row: dS = P ⊙ (dP − rowsum(P ⊙ dP))
    let (tq, tk) = (p.rows(), p.cols());
    let mut ds = vec![0.0; tq * tk];
    for i in 0..tq {
        let pr = p.row(i);
        let dpr = dp.row(i);
        let dot: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
        for j in 0..tk {
            ds[i * tk + j] = pr[j] * (dpr[j] - dot) / trace.scale;
        }
    }
    let ds = Tensor::from_parts(vec![tq, tk], ds);
    let dq = ds.matmul(k)?;
    let dk = ds.transpose()?.matmul(q)?;
    Ok(AttentionGrads { dq, dk, dv })
}

/// Multi-head attention with full-width projections split into `heads` slices.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

/// Forward results plus the intermediates the backward pass needs.
#[derive(Debug, Clone)]
pub struct MhaForward {
    pub output: Tensor,
    /// `(heads · Tq) × N`, head-major.
    pub head_weights: Tensor,
    traces: Vec<AttentionTrace>,
    qp: Tensor,
    kp: Tensor,
    vp: Tensor,
    concat: Tensor,
}

#[derive(Debug, Clone)]
pub struct MhaGrads {
    pub dquery: Tensor,
    pub dkeys: Tensor,
    pub dvalues: Tensor,
    pub q: AffineGrads,
    pub k: AffineGrads,
    pub v: AffineGrads,
    pub o: AffineGrads,
}

impl MultiHeadAttention {
    pub fn new(heads: usize, q: Linear, k: Linear, v: Linear, o: Linear) -> Result<Self> {
        let d = q.out_dim();
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::IndivisibleHeads { d, heads });
        }
        if k.out_dim() != d || v.out_dim() != d || o.in_dim() != d {
            return Err(Error::shape("multi-head projection widths disagree"));
        }
        Ok(Self { heads, q, k, v, o })
    }

    pub fn head_dim(&self) -> usize {
        self.q.out_dim() / self.heads
    }

    pub fn forward(&self, query: &Tensor, keys: &Tensor, values: &Tensor) -> Result<MhaForward> {
        if keys.rows() != values.rows() {
            return Err(Error::shape("keys and values differ in length"));
        }
        let qp = self.q.forward(query)?;
        let kp = self.k.forward(keys)?;
        let vp = self.v.forward(values)?;
        let hd = self.head_dim();
        let mut traces = Vec::with_capacity(self.heads);
        let mut head_out = Vec::with_capacity(self.heads);
        let mut weights = Vec::new();
        for h in 0..self.heads {
            let trace = scaled_dot_attention(
                &qp.slice_cols(h * hd, hd)?,
                &kp.slice_cols(h * hd, hd)?,
                &vp.slice_cols(h * hd, hd)?,
                ScaleMode::Sqrt,
            )?;
            weights.extend_from_slice(trace.weights.data());
            head_out.push(trace.output.clone());
            traces.push(trace);
        }
        let refs: Vec<&Tensor> = head_out.iter().collect();
        let concat = Tensor::concat_cols(&refs)?;
        let output = self.o.forward(&concat)?;
        let head_weights =
            Tensor::from_parts(vec![self.heads * query.rows(), keys.rows()], weights);
        Ok(MhaForward {
            output,
            head_weights,
            traces,
            qp,
            kp,
            vp,
            concat,
        })
    }

    pub fn backward(
        &self,
        query: &Tensor,
        keys: &Tensor,
        values: &Tensor,
        fwd: &MhaForward,
        d_out: &Tensor,
    ) -> Result<MhaGrads> {
        let o = self.o.backward(&fwd.concat, d_out)?;
        let hd = self.head_dim();
        let mut dq_parts = Vec::with_capacity(self.heads);
        let mut dk_parts = Vec::with_capacity(self.heads);
        let mut dv_parts = Vec::with_capacity(self.heads);
        for (h, trace) in fwd.traces.iter().enumerate() {
            let g = attention_backward(
                trace,
                &fwd.qp.slice_cols(h * hd, hd)?,
                &fwd.kp.slice_cols(h * hd, hd)?,
                &fwd.vp.slice_cols(h * hd, hd)?,
                &o.dx.slice_cols(h * hd, hd)?,
            )?;
            dq_parts.push(g.dq);
            dk_parts.push(g.dk);
            dv_parts.push(g.dv);
        }
        let cat = |parts: &[Tensor]| Tensor::concat_cols(&parts.iter().collect::<Vec<_>>());
        let q = self.q.backward(query, &cat(&dq_parts)?)?;
        let k = self.k.backward(keys, &cat(&dk_parts)?)?;
        let v = self.v.backward(values, &cat(&dv_parts)?)?;
        Ok(MhaGrads {
            dquery: q.dx.clone(),
            dkeys: k.dx.clone(),
            dvalues: v.dx.clone(),
            q,
            k,
            v,
            o,
        })
    }
}
