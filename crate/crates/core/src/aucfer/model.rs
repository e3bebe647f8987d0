use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Embedding layer `f = relu(W1ᵀx + b1)` followed by linear logits
/// `W2ᵀf + b2`. `w1` is d_in × d_emb and `w2` is d_emb × n_classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(d_in: usize, d_emb: usize, n_classes: usize) -> Self {
        Self {
            w1: Matrix::zeros(d_in, d_emb),
            b1: vec![0.0; d_emb],
            w2: Matrix::zeros(d_emb, n_classes),
            b2: vec![0.0; n_classes],
        }
    }

    /// Uniform(±1/√fan_in) for every block.
    pub fn init(d_in: usize, d_emb: usize, n_classes: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(d_in, d_emb, n_classes);
        let a1 = 1.0 / (d_in as f64).sqrt();
        let a2 = 1.0 / (d_emb as f64).sqrt();
        for v in p.w1.data.iter_mut().chain(p.b1.iter_mut()) {
            *v = (2.0 * rng.uniform() - 1.0) * a1;
        }
        for v in p.w2.data.iter_mut().chain(p.b2.iter_mut()) {
            *v = (2.0 * rng.uniform() - 1.0) * a2;
        }
        p
    }

    pub fn d_in(&self) -> usize {
        self.w1.rows
    }

    pub fn d_emb(&self) -> usize {
        self.w1.cols
    }

    pub fn n_classes(&self) -> usize {
        self.w2.cols
    }

    /// Every parameter in a fixed order: w1, b1, w2, b2.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.w1.data.clone();
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2.data);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .data
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.data.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }

    /// Pre-activation `W1ᵀx + b1` for one input.
    pub(crate) fn hidden(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b1);
        let d = self.d_emb();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let w = &self.w1.data[i * d..(i + 1) * d];
            for (o, &wij) in out.iter_mut().zip(w) {
                *o += xi * wij;
            }
        }
    }

    pub(crate) fn logits(&self, f: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b2);
        let c = self.n_classes();
        for (j, &fj) in f.iter().enumerate() {
            let w = &self.w2.data[j * c..(j + 1) * c];
            for (o, &wjc) in out.iter_mut().zip(w) {
                *o += fj * wjc;
            }
        }
    }

    /// Embedding and logits for one input.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.d_in() {
            return Err(Error::DimensionMismatch {
                expected: self.d_in(),
                actual: x.len(),
            });
        }
        let mut f = vec![0.0; self.d_emb()];
        self.hidden(x, &mut f);
        for v in &mut f {
            *v = v.max(0.0);
        }
        let mut z = vec![0.0; self.n_classes()];
        self.logits(&f, &mut z);
        Ok((f, z))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Softmax probability of class 1 and the embedding.
pub fn predict(params: &ModelParams, features: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (f, z) = params.forward(features)?;
    let p = softmax(&z);
    Ok((p[1.min(p.len() - 1)], f))
}

/// Scores for many inputs; equal elementwise to [`predict`].
pub fn predict_batch(params: &ModelParams, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    features.iter().map(|x| predict(params, x).map(|(s, _)| s)).collect()
}
