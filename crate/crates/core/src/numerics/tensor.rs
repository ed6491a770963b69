use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense row-major tensor of `f64` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::Shape {
                op: "tensor",
                expected: format!("{expected} values for shape {shape:?}"),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// Rank-1 tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Rank-2 tensor with `rows * cols` values.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
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

    /// Leading dimension for rank-2 tensors, 1 for vectors.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Trailing dimension.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[b, n] = bias[n] + Σ_k x[b, k] · w[n, k]`. Each output row depends only on
/// its own input row, so results do not change with batch composition.
pub(crate) fn affine_rows(x: &[f64], k: usize, w: &[f64], bias: &[f64], out: &mut [f64]) {
    let n = bias.len();
    let batch = x.len() / k;
    debug_assert_eq!(w.len(), n * k);
    debug_assert_eq!(out.len(), batch * n);
    if k == 0 {
        out.iter_mut().enumerate().for_each(|(i, o)| *o = bias[i % n]);
        return;
    }
    for (j, wr) in w.chunks_exact(k).enumerate() {
        for b in 0..batch {
            out[b * n + j] = bias[j] + dot(&x[b * k..(b + 1) * k], wr);
        }
    }
}

/// `dx[b, k] += Σ_n dy[b, n] · w[n, k]`.
pub(crate) fn backprop_input(dy: &[f64], n: usize, w: &[f64], dx: &mut [f64]) {
    if n == 0 || w.is_empty() {
        return;
    }
    let k = w.len() / n;
    let batch = dy.len() / n;
    for (j, wr) in w.chunks_exact(k).enumerate() {
        for b in 0..batch {
            let g = dy[b * n + j];
            if g != 0.0 {
                axpy(g, wr, &mut dx[b * k..(b + 1) * k]);
            }
        }
    }
}

/// `dw[n, k] += Σ_b dy[b, n] · x[b, k]` and `db[n] += Σ_b dy[b, n]`.
pub(crate) fn backprop_weights(dy: &[f64], n: usize, x: &[f64], dw: &mut [f64], db: &mut [f64]) {
    if n == 0 {
        return;
    }
    let k = dw.len() / n;
    let batch = dy.len() / n;
    if k == 0 {
        for row in dy.chunks_exact(n) {
            db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
        }
        return;
    }
    for (j, dwr) in dw.chunks_exact_mut(k).enumerate() {
        for b in 0..batch {
            let g = dy[b * n + j];
            if g != 0.0 {
                axpy(g, &x[b * k..(b + 1) * k], dwr);
                db[j] += g;
            }
        }
    }
}
