//! Analytic gradients of the embedding with respect to the attention and fusion
//! parameters, with the encoded cue streams held fixed.

use std::collections::BTreeMap;

use super::{AggregationConfig, Aggregator, CrossAttention, CrossAttentionOutput, FusionOutput, Mode};
use crate::error::{Error, Result};
use crate::nn::{attention_backward, gradcheck, AffineGrads, GradcheckOptions, GradcheckReport, Tensor};
use crate::weights::ParamStore;

/// Frame-aligned streams entering the attention levels.
#[derive(Debug, Clone)]
pub struct TailInputs {
    pub h_sv: Tensor,
    pub h_f0: Option<Tensor>,
    pub h_me: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub(super) struct TailTrace {
    pub level1: CrossAttentionOutput,
    pub level2: Option<CrossAttentionOutput>,
    pub fusion: Option<FusionOutput>,
    pub vector: Tensor,
}

impl TailInputs {
    fn streams(&self, mode: Mode) -> Result<(&Tensor, Option<&Tensor>)> {
        let f0 = self.h_f0.as_ref();
        let me = self.h_me.as_ref();
        let (first, second) = match mode {
            Mode::SeF0 | Mode::SeF0ThenMe => (f0, me),
            Mode::SeMe | Mode::SeMeThenF0 => (me, f0),
            Mode::Se => return Err(Error::InvalidConfig("SE mode has no attention tail".into())),
        };
        let first = first.ok_or_else(|| Error::MissingParameter("level-1 prompt stream".into()))?;
        if mode.levels() == 2 && second.is_none() {
            return Err(Error::MissingParameter("level-2 query stream".into()));
        }
        Ok((first, second.filter(|_| mode.levels() == 2)))
    }
}

impl Aggregator {
    pub(super) fn tail(&self, inputs: &TailInputs) -> Result<TailTrace> {
        let (prompt, query2) = inputs.streams(self.cfg.mode)?;
        let missing = |n: &str| Error::MissingParameter(n.to_string());
        let level1 = self
            .level1
            .as_ref()
            .ok_or_else(|| missing("agg.level1"))?
            .forward(&inputs.h_sv, prompt)?;
        let level2 = match query2 {
            Some(q) => Some(
                self.level2
                    .as_ref()
                    .ok_or_else(|| missing("agg.level2"))?
                    .forward(q, level1.output())?,
            ),
            None => None,
        };
        let h = level2.as_ref().unwrap_or(&level1).output();
        let d = h.cols();
        let (fusion, vector) = match &self.fusion {
            Some(f) => {
                let out = f.forward(h)?;
                let v = out.attention.output.clone().reshape(vec![d])?;
                (Some(out), v)
            }
            None => (None, h.mean_rows().reshape(vec![d])?),
        };
        Ok(TailTrace {
            level1,
            level2,
            fusion,
            vector,
        })
    }
}

/// Names of the parameters `tail_gradients` differentiates, in a fixed order.
pub fn tail_param_names(cfg: &AggregationConfig) -> Vec<String> {
    let mut names = Vec::new();
    for level in 1..=cfg.mode.levels() {
        for proj in ["q", "k", "v"] {
            for p in ["weight", "bias"] {
                names.push(format!("agg.level{level}.{proj}.{p}"));
            }
        }
    }
    if cfg.uses_fusion() {
        names.push("agg.tokens".into());
        for proj in ["q", "k", "v", "o"] {
            for p in ["weight", "bias"] {
                names.push(format!("agg.fuse.{proj}.{p}"));
            }
        }
    }
    names
}

fn insert_affine(out: &mut BTreeMap<String, Tensor>, prefix: &str, g: AffineGrads) {
    out.insert(format!("{prefix}.weight"), g.dweight);
    out.insert(format!("{prefix}.bias"), g.dbias);
}

/// Broadcast a `1 × d` gradient of a temporal mean back over `t` rows.
fn mean_rows_backward(d: &Tensor, t: usize) -> Tensor {
    let row: Vec<f64> = d.row(0).iter().map(|v| v / t as f64).collect();
    Tensor::from_rows(&vec![row; t]).expect("finite rows")
}

/// Backward through one cross-attention level; returns the gradient reaching the
/// key/value stream.
fn cross_backward(
    layer: &CrossAttention,
    fwd: &CrossAttentionOutput,
    query_states: &Tensor,
    kv_states: &Tensor,
    d_out: &Tensor,
    prefix: &str,
    grads: &mut BTreeMap<String, Tensor>,
) -> Result<Tensor> {
    let g = attention_backward(&fwd.trace, &fwd.q, &fwd.k, &fwd.v, d_out)?;
    let gq = layer.q.backward(query_states, &g.dq)?;
    let gk = layer.k.backward(kv_states, &g.dk)?;
    let gv = layer.v.backward(kv_states, &g.dv)?;
    let d_kv = gk.dx.add(&gv.dx)?;
    insert_affine(grads, &format!("{prefix}.q"), gq);
    insert_affine(grads, &format!("{prefix}.k"), gk);
    insert_affine(grads, &format!("{prefix}.v"), gv);
    Ok(d_kv)
}

/// Embedding and the gradient of `Σ embedding ⊙ d_vector` for every tail parameter.
pub fn tail_gradients(
    agg: &Aggregator,
    inputs: &TailInputs,
    d_vector: &[f64],
) -> Result<(Tensor, BTreeMap<String, Tensor>)> {
    let fwd = agg.tail(inputs)?;
    let d = fwd.vector.len();
    if d_vector.len() != d {
        return Err(Error::DimMismatch(d_vector.len(), d));
    }
    let (prompt, query2) = inputs.streams(agg.cfg.mode)?;
    let d_emb = Tensor::matrix(1, d, d_vector.to_vec())?;
    let mut grads = BTreeMap::new();

    let h = fwd.level2.as_ref().unwrap_or(&fwd.level1).output();
    let d_h = match (&agg.fusion, &fwd.fusion) {
        (Some(f), Some(out)) => {
            let g = f
                .mha
                .backward(&out.query, &f.tokens, &f.tokens, &out.attention, &d_emb)?;
            grads.insert("agg.tokens".into(), g.dkeys.add(&g.dvalues)?);
            let dq = g.dquery.clone();
            insert_affine(&mut grads, "agg.fuse.q", g.q);
            insert_affine(&mut grads, "agg.fuse.k", g.k);
            insert_affine(&mut grads, "agg.fuse.v", g.v);
            insert_affine(&mut grads, "agg.fuse.o", g.o);
            mean_rows_backward(&dq, h.rows())
        }
        _ => mean_rows_backward(&d_emb, h.rows()),
    };

    let d_level1 = match (&fwd.level2, query2, &agg.level2) {
        (Some(l2_fwd), Some(q2), Some(l2)) => cross_backward(
            l2,
            l2_fwd,
            q2,
            fwd.level1.output(),
            &d_h,
            "agg.level2",
            &mut grads,
        )?,
        _ => d_h,
    };
    let l1 = agg
        .level1
        .as_ref()
        .ok_or_else(|| Error::MissingParameter("agg.level1".into()))?;
    cross_backward(
        l1,
        &fwd.level1,
        &inputs.h_sv,
        prompt,
        &d_level1,
        "agg.level1",
        &mut grads,
    )?;
    Ok((fwd.vector, grads))
}

/// Finite-difference check of `params → Σ embedding` over every tail parameter.
pub fn check_tail(
    store: &ParamStore,
    cfg: &AggregationConfig,
    inputs: &TailInputs,
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    let agg = Aggregator::from_store(store, cfg)?;
    let names = tail_param_names(cfg);
    let d = agg.tail(inputs)?.vector.len();
    let (_, grads) = tail_gradients(&agg, inputs, &vec![1.0; d])?;
    let mut point = Vec::new();
    let mut analytic = Vec::new();
    for n in &names {
        point.extend_from_slice(store.get(n)?.data());
        analytic.extend_from_slice(grads.get(n).ok_or_else(|| Error::MissingParameter(n.clone()))?.data());
    }
    let mut scratch = store.clone();
    gradcheck(
        |x| {
            let mut off = 0;
            for n in &names {
                let t = scratch.get_mut(n)?;
                let len = t.len();
                t.data_mut().copy_from_slice(&x[off..off + len]);
                off += len;
            }
            let agg = Aggregator::from_store(&scratch, cfg)?;
            Ok(agg.tail(inputs)?.vector.sum())
        },
        &point,
        &analytic,
        opts,
    )
}
