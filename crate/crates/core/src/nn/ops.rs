use super::Tensor;
use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// `y = x·W + b` for `x: T×in`, `W: in×out`, `b: out`.
pub fn affine(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, n_in) = x.expect_matrix("affine input")?;
    let (w_in, w_out) = weight.expect_matrix("affine weight")?;
    if n_in != w_in || bias.len() != w_out {
        return Err(Error::shape(format!(
            "affine: x {:?}, W {:?}, b {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let mut y = x.matmul(weight)?;
    let b = bias.data();
    for i in 0..y.rows() {
        for (v, bv) in y.row_mut(i).iter_mut().zip(b) {
            *v += bv;
        }
    }
    Ok(y)
}

/// Gradients of an affine map given the upstream gradient `dy`.
#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub dx: Tensor,
    pub dweight: Tensor,
    pub dbias: Tensor,
}

pub fn affine_backward(x: &Tensor, weight: &Tensor, dy: &Tensor) -> Result<AffineGrads> {
    let dx = dy.matmul(&weight.transpose()?)?;
    let dweight = x.transpose()?.matmul(dy)?;
    let mut db = vec![0.0; dy.cols()];
    for i in 0..dy.rows() {
        for (d, v) in db.iter_mut().zip(dy.row(i)) {
            *d += v;
        }
    }
    Ok(AffineGrads {
        dx,
        dweight,
        dbias: Tensor::from_parts(vec![db.len()], db),
    })
}

/// Fully connected layer with weight `in × out` and bias `out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (_, out) = weight.expect_matrix("linear weight")?;
        if bias.len() != out {
            return Err(Error::shape(format!(
                "linear bias {} vs out {out}",
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            weight: Tensor::identity(d),
            bias: Tensor::zeros(&[d]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        affine(x, &self.weight, &self.bias)
    }

    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<AffineGrads> {
        affine_backward(x, &self.weight, dy)
    }
}

/// Same-padded 1-D cross-correlation along time.
///
/// `x: T×C_in`, `kernels: C_out×C_in×k` with `k` odd, output `T×C_out`. Taps that fall
/// outside `[0, T)` read zeros.
pub fn conv1d(
    x: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    dilation: usize,
) -> Result<Tensor> {
    let (t_len, c_in) = x.expect_matrix("conv1d input")?;
    let (c_out, k_in, k) = match kernels.shape() {
        [a, b, c] => (*a, *b, *c),
        s => return Err(Error::shape(format!("conv1d kernels must be rank 3, got {s:?}"))),
    };
    if k % 2 == 0 {
        return Err(Error::EvenKernel(k));
    }
    if k_in != c_in {
        return Err(Error::shape(format!(
            "conv1d input channels {c_in} vs kernel {k_in}"
        )));
    }
    if dilation == 0 {
        return Err(Error::shape("conv1d dilation must be positive"));
    }
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::shape(format!(
                "conv1d bias {} vs {c_out} outputs",
                b.len()
            )));
        }
    }
    let half = (k / 2) as isize;
    let w = kernels.data();
    let xd = x.data();
    let mut out = vec![0.0; t_len * c_out];
    for t in 0..t_len {
        let o_row = &mut out[t * c_out..(t + 1) * c_out];
        if let Some(b) = bias {
            o_row.copy_from_slice(b.data());
        }
        for tap in 0..k {
            let src = t as isize + (tap as isize - half) * dilation as isize;
            if src < 0 || src >= t_len as isize {
                continue;
            }
            let x_row = &xd[src as usize * c_in..(src as usize + 1) * c_in];
            for (co, o) in o_row.iter_mut().enumerate() {
                let base = co * c_in * k;
                let mut acc = 0.0;
                for (ci, &xv) in x_row.iter().enumerate() {
                    acc += w[base + ci * k + tap] * xv;
                }
                *o += acc;
            }
        }
    }
    Ok(Tensor::from_parts(vec![t_len, c_out], out))
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub dilation: usize,
}

impl Conv1d {
    pub fn new(weight: Tensor, bias: Tensor, dilation: usize) -> Result<Self> {
        match weight.shape() {
            [c_out, _, k] => {
                if k % 2 == 0 {
                    return Err(Error::EvenKernel(*k));
                }
                if bias.len() != *c_out {
                    return Err(Error::shape("conv1d bias length"));
                }
            }
            s => return Err(Error::shape(format!("conv1d weight {s:?}"))),
        }
        Ok(Self {
            weight,
            bias,
            dilation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv1d(x, &self.weight, Some(&self.bias), self.dilation)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let cols = x.cols();
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(cols) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

/// Gated linear unit over a same-padded convolution: a conv producing `2C` channels
/// split into `(a, b)`, output `a ⊙ σ(b)`.
#[derive(Debug, Clone)]
pub struct GluConv {
    pub conv: Conv1d,
}

impl GluConv {
    pub fn new(conv: Conv1d) -> Result<Self> {
        if !conv.out_channels().is_multiple_of(2) {
            return Err(Error::shape("GLU conv needs an even number of outputs"));
        }
        Ok(Self { conv })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.conv.forward(x)?;
        let c = y.cols() / 2;
        let mut out = Vec::with_capacity(y.rows() * c);
        for i in 0..y.rows() {
            let (a, b) = y.row(i).split_at(c);
            out.extend(a.iter().zip(b).map(|(&a, &b)| a * sigmoid(b)));
        }
        Ok(Tensor::from_parts(vec![y.rows(), c], out))
    }
}
