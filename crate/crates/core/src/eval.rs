//! Embedding-space scoring: cosine similarity, cross-similarity matrices,
//! diagonal dominance and automated ABX selection.

use std::collections::BTreeSet;
use std::io::Write;

use crate::dsp::{sig9, MelSpectrogram};
use crate::error::{Error, Result};

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch(a.len(), b.len()));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Dense `rows × cols` cosine matrix with labels on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Vec<Vec<f64>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl SimilarityMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn with_labels(mut self, rows: Vec<String>, cols: Vec<String>) -> Result<Self> {
        if rows.len() != self.n_rows() || cols.len() != self.n_cols() {
            return Err(Error::LabelMismatch(format!(
                "{}×{} labels for a {}×{} matrix",
                rows.len(),
                cols.len(),
                self.n_rows(),
                self.n_cols()
            )));
        }
        self.row_labels = rows;
        self.col_labels = cols;
        Ok(self)
    }

    pub fn transpose(&self) -> Self {
        let values = (0..self.n_cols())
            .map(|j| self.values.iter().map(|r| r[j]).collect())
            .collect();
        Self {
            values,
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
        }
    }

    /// Header row of column labels, then one labelled row per matrix row.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let mut header = vec![String::new()];
        header.extend(self.col_labels.iter().map(|l| csv_field(l)));
        writeln!(out, "{}", header.join(","))?;
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let mut cells = vec![csv_field(label)];
            cells.extend(row.iter().map(|&v| sig9(v)));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Binary greyscale PGM, `-1 → 0` and `1 → 255`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.n_cols(), self.n_rows()).into_bytes();
        for row in &self.values {
            out.extend(row.iter().map(|&v| pgm_level(v)));
        }
        out
    }
}

pub(crate) fn pgm_level(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Entry `(i, j)` is `cosine(rows[i], cols[j])`. Labels default to indices.
pub fn cross_similarity<R: AsRef<[f64]>, C: AsRef<[f64]>>(
    rows: &[R],
    cols: &[C],
) -> Result<SimilarityMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::DimMismatch(rows.len(), cols.len()));
    }
    let values = rows
        .iter()
        .map(|r| cols.iter().map(|c| cosine(r.as_ref(), c.as_ref())).collect())
        .collect::<Result<_>>()?;
    Ok(SimilarityMatrix {
        values,
        row_labels: (0..rows.len()).map(|i| i.to_string()).collect(),
        col_labels: (0..cols.len()).map(|i| i.to_string()).collect(),
    })
}

/// Fraction of rows whose argmax column has the row's label. Ties go to the lowest column.
pub fn diagonal_dominance(m: &SimilarityMatrix) -> Result<f64> {
    let rows: BTreeSet<&str> = m.row_labels.iter().map(String::as_str).collect();
    let cols: BTreeSet<&str> = m.col_labels.iter().map(String::as_str).collect();
    if rows != cols {
        return Err(Error::LabelMismatch(format!(
            "row labels {rows:?} vs column labels {cols:?}"
        )));
    }
    if m.values.is_empty() {
        return Err(Error::LabelMismatch("empty matrix".into()));
    }
    let hits = m
        .values
        .iter()
        .zip(&m.row_labels)
        .filter(|(row, label)| m.col_labels[argmax(row)] == **label)
        .count();
    Ok(hits as f64 / m.values.len() as f64)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Index of the candidate most cosine-similar to `reference`; the lowest index wins ties.
pub fn abx_select<R: AsRef<[f64]>, C: AsRef<[f64]>>(reference: R, candidates: &[C]) -> Result<usize> {
    if candidates.len() < 2 {
        return Err(Error::TooFewCandidates(candidates.len()));
    }
    let sims = candidates
        .iter()
        .map(|c| cosine(reference.as_ref(), c.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax(&sims))
}

/// Weight-free control embedding: per-bin temporal mean followed by per-bin standard deviation.
pub fn mel_stats_embedding(mel: &MelSpectrogram) -> Vec<f64> {
    let frames = &mel.frames;
    let (t, f) = (frames.rows(), frames.cols());
    let mut mean = vec![0.0; f];
    for i in 0..t {
        for (m, v) in mean.iter_mut().zip(frames.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    let mut var = vec![0.0; f];
    for i in 0..t {
        for ((s, v), m) in var.iter_mut().zip(frames.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    mean.extend(var.into_iter().map(|s| (s / t as f64).sqrt()));
    mean
}

/// Element-wise mean of equally sized vectors.
pub fn mean_vector<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::DimMismatch(0, 0))?.as_ref();
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != acc.len() {
            return Err(Error::DimMismatch(v.len(), acc.len()));
        }
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    acc.iter_mut().for_each(|a| *a /= vectors.len() as f64);
    Ok(acc)
}

/// Group labels in first-appearance order with the member indices of each.
pub fn groups(labels: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match out.iter_mut().find(|(g, _)| g == l) {
            Some((_, members)) => members.push(i),
            None => out.push((l.clone(), vec![i])),
        }
    }
    out
}

/// Group-level cross-similarity. Each group's rows use the mean of its even-position
/// members and its columns the mean of its odd-position members, so the diagonal
/// compares disjoint utterances. A single-member group appears on both axes.
pub fn grouped_cross_similarity<V: AsRef<[f64]>>(
    labels: &[String],
    vectors: &[V],
) -> Result<SimilarityMatrix> {
    if labels.len() != vectors.len() {
        return Err(Error::LabelMismatch(format!(
            "{} labels for {} embeddings",
            labels.len(),
            vectors.len()
        )));
    }
    let mut names = Vec::new();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for (name, members) in groups(labels) {
        let pick = |parity: usize| -> Vec<&[f64]> {
            members
                .iter()
                .enumerate()
                .filter(|(k, _)| k % 2 == parity)
                .map(|(_, &i)| vectors[i].as_ref())
                .collect()
        };
        let even = pick(0);
        let odd = pick(1);
        rows.push(mean_vector(&even)?);
        cols.push(mean_vector(if odd.is_empty() { &even } else { &odd })?);
        names.push(name);
    }
    cross_similarity(&rows, &cols)?.with_labels(names.clone(), names)
}
