//! Central finite-difference gradient checking.

use super::attention::{attention_backward, scaled_dot_attention, ScaleMode};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    pub step: f64,
    pub rel_tol: f64,
    /// Differences below this are accepted regardless of magnitude.
    pub abs_floor: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-6,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    /// Worst `|a − n| / max(|a|, |n|, abs_floor / rel_tol)` over all coordinates.
    pub worst_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub rel_tol: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.worst_error <= self.rel_tol
    }
}

/// Compare `analytic` against central differences of the scalar map `f` at `point`.
pub fn gradcheck<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    opts: GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if point.len() != analytic.len() {
        return Err(Error::shape(format!(
            "gradcheck: {} coordinates, {} gradient entries",
            point.len(),
            analytic.len()
        )));
    }
    let denom_floor = opts.abs_floor / opts.rel_tol;
    let mut x = point.to_vec();
    let mut report = GradcheckReport {
        worst_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: point.len(),
        rel_tol: opts.rel_tol,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + opts.step;
        let plus = f(&x)?;
        x[i] = orig - opts.step;
        let minus = f(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteEvaluation(format!("coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(denom_floor);
        if err > report.worst_error || i == 0 {
            report.worst_error = err;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Gradcheck `Σ attention(Q, K, V) ⊙ d_out` over the concatenated entries of Q, K and V.
///
/// `corrupt` flips the sign of the largest analytic gradient entry before comparing; it
/// exists to demonstrate that the checker catches a broken backward pass.
pub fn check_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    d_out: &Tensor,
    mode: ScaleMode,
    corrupt: bool,
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    let trace = scaled_dot_attention(q, k, v, mode)?;
    let g = attention_backward(&trace, q, k, v, d_out)?;
    let mut analytic: Vec<f64> = [g.dq.data(), g.dk.data(), g.dv.data()].concat();
    if corrupt {
        let idx = analytic
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        analytic[idx] = -analytic[idx];
    }
    let point: Vec<f64> = [q.data(), k.data(), v.data()].concat();
    let (nq, nk) = (q.len(), k.len());
    gradcheck(
        |x| {
            let qq = Tensor::new(q.shape().to_vec(), x[..nq].to_vec())?;
            let kk = Tensor::new(k.shape().to_vec(), x[nq..nq + nk].to_vec())?;
            let vv = Tensor::new(v.shape().to_vec(), x[nq + nk..].to_vec())?;
            let out = scaled_dot_attention(&qq, &kk, &vv, mode)?.output;
            Ok(out.data().iter().zip(d_out.data()).map(|(a, b)| a * b).sum())
        },
        &point,
        &analytic,
        opts,
    )
}
