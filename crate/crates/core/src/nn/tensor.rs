use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
///
/// Construction through [`Tensor::new`] rejects non-finite entries and shape/length
/// disagreement. Most of the crate works with rank-2 tensors laid out as
/// `frames × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation(format!(
                "entry {i} of tensor {shape:?}"
            )));
        }
        Ok(Self { shape, data })
    }

    /// Skips the finiteness scan; callers guarantee the invariants.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![0.0; n])
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a rank-2 tensor (rank-1 tensors count as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub(crate) fn expect_matrix(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(format!("{what}: expected a matrix, got {s:?}"))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.expect_matrix("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self::from_parts(vec![c, r], out))
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Self> {
        let (m, k) = self.expect_matrix("matmul lhs")?;
        let (k2, n) = rhs.expect_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dims {m}x{k} · {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a = &self.data[i * k..(i + 1) * k];
            let o = &mut out[i * n..(i + 1) * n];
            for (p, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b = &rhs.data[p * n..(p + 1) * n];
                for (ov, &bv) in o.iter_mut().zip(b) {
                    *ov += av * bv;
                }
            }
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// Column-wise mean over rows, returned as a `1 × cols` matrix.
    pub fn mean_rows(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= r as f64);
        Self::from_parts(vec![1, c], out)
    }

    /// First `n` rows of a matrix.
    pub fn take_rows(&self, n: usize) -> Result<Self> {
        let (r, c) = self.expect_matrix("take_rows")?;
        if n == 0 || n > r {
            return Err(Error::shape(format!("take_rows({n}) of {r} rows")));
        }
        Ok(Self::from_parts(vec![n, c], self.data[..n * c].to_vec()))
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Self> {
        let (r, c) = self.expect_matrix("slice_cols")?;
        if width == 0 || start + width > c {
            return Err(Error::shape(format!(
                "slice_cols({start}, {width}) of {c} columns"
            )));
        }
        let mut out = Vec::with_capacity(r * width);
        for i in 0..r {
            out.extend_from_slice(&self.row(i)[start..start + width]);
        }
        Ok(Self::from_parts(vec![r, width], out))
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Self> {
        let rows = parts
            .first()
            .ok_or_else(|| Error::shape("concat of nothing"))?
            .rows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.expect_matrix("concat_cols")?;
            if r != rows {
                return Err(Error::shape(format!("concat rows {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                out.extend_from_slice(p.row(i));
            }
        }
        Ok(Self::from_parts(vec![rows, total], out))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(format!(
                "reshape {:?} -> {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
