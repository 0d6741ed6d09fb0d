//! Dense row-major tensors and named parameter collections.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense n-dimensional array of `f64`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n != data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::new",
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidSize("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
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

    /// Leading dimension.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per leading-dimension slice.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Copies the given leading-dimension rows into a new tensor.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let w = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Self { shape, data }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_rank(&self, rank: usize, context: &'static str) -> Result<()> {
        if self.shape.len() != rank {
            let mut expected = vec![0; rank];
            expected[..rank.min(self.shape.len())]
                .copy_from_slice(&self.shape[..rank.min(self.shape.len())]);
            return Err(Error::shape(context, &expected, &self.shape));
        }
        Ok(())
    }
}

/// One named parameter with its gradient buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters of a layer, each with a same-shaped gradient buffer.
///
/// Insertion order is preserved; it defines the serialization manifest order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LayerParams {
    entries: Vec<Param>,
}

impl LayerParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its slot index.
    ///
    /// Panics on a duplicate name; layer constructors are the only callers.
    pub fn insert(&mut self, name: &str, value: Tensor) -> usize {
        assert!(
            self.entries.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.shape());
        self.entries.push(Param {
            name: name.to_string(),
            value,
            grad,
        });
        self.entries.len() - 1
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.iter_mut().find(|p| p.name == name)
    }

    pub fn value(&self, slot: usize) -> &Tensor {
        &self.entries[slot].value
    }

    pub fn value_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.entries[slot].value
    }

    pub fn grad_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.entries[slot].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grad.fill(0.0);
        }
    }
}

/// `out[b, o] += Σ_i x[b, i] · w[i, o]` for row-major buffers.
pub(crate) fn matmul_acc(
    x: &[f64],
    w: &[f64],
    out: &mut [f64],
    rows: usize,
    inner: usize,
    cols: usize,
) {
    for b in 0..rows {
        let xr = &x[b * inner..(b + 1) * inner];
        let or = &mut out[b * cols..(b + 1) * cols];
        for (i, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wr = &w[i * cols..(i + 1) * cols];
            for (o, &wv) in or.iter_mut().zip(wr) {
                *o += xv * wv;
            }
        }
    }
}

/// `out[i, o] += Σ_b x[b, i] · g[b, o]` (xᵀ·g).
pub(crate) fn matmul_tn_acc(
    x: &[f64],
    g: &[f64],
    out: &mut [f64],
    rows: usize,
    inner: usize,
    cols: usize,
) {
    for b in 0..rows {
        let xr = &x[b * inner..(b + 1) * inner];
        let gr = &g[b * cols..(b + 1) * cols];
        for (i, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let or = &mut out[i * cols..(i + 1) * cols];
            for (o, &gv) in or.iter_mut().zip(gr) {
                *o += xv * gv;
            }
        }
    }
}

/// `out[b, i] += Σ_o g[b, o] · w[i, o]` (g·wᵀ).
pub(crate) fn matmul_nt_acc(
    g: &[f64],
    w: &[f64],
    out: &mut [f64],
    rows: usize,
    inner: usize,
    cols: usize,
) {
    for b in 0..rows {
        let gr = &g[b * cols..(b + 1) * cols];
        let or = &mut out[b * inner..(b + 1) * inner];
        for (i, o) in or.iter_mut().enumerate() {
            let wr = &w[i * cols..(i + 1) * cols];
            *o += gr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Rows per parallel work unit. Fixed so reductions do not depend on thread count.
pub(crate) const ROW_CHUNK: usize = 16;

/// Upper bound on per-chunk gradient partials held at once.
const MAX_PARTIALS: usize = 32;

/// Rows per chunk for reductions that keep one full-size partial per chunk.
/// Depends only on `rows`, so the summation order is fixed.
pub(crate) fn reduce_chunk(rows: usize) -> usize {
    ROW_CHUNK.max(rows.div_ceil(MAX_PARTIALS))
}

/// Row-parallel [`matmul_acc`].
pub(crate) fn par_matmul_acc(
    x: &[f64],
    w: &[f64],
    out: &mut [f64],
    rows: usize,
    inner: usize,
    cols: usize,
) {
    debug_assert_eq!(out.len(), rows * cols);
    out.par_chunks_mut(ROW_CHUNK * cols)
        .zip(x.par_chunks(ROW_CHUNK * inner))
        .for_each(|(o, xc)| matmul_acc(xc, w, o, xc.len() / inner, inner, cols));
}

/// Row-parallel [`matmul_nt_acc`].
pub(crate) fn par_matmul_nt_acc(
    g: &[f64],
    w: &[f64],
    out: &mut [f64],
    rows: usize,
    inner: usize,
    cols: usize,
) {
    debug_assert_eq!(out.len(), rows * inner);
    out.par_chunks_mut(ROW_CHUNK * inner)
        .zip(g.par_chunks(ROW_CHUNK * cols))
        .for_each(|(o, gc)| matmul_nt_acc(gc, w, o, gc.len() / cols, inner, cols));
}

/// [`matmul_tn_acc`] with per-chunk partial sums reduced in chunk order.
pub(crate) fn par_matmul_tn_acc(
    x: &[f64],
    g: &[f64],
    out: &mut [f64],
    rows: usize,
    inner: usize,
    cols: usize,
) {
    if rows <= ROW_CHUNK {
        matmul_tn_acc(x, g, out, rows, inner, cols);
        return;
    }
    let chunk = reduce_chunk(rows);
    let partials: Vec<Vec<f64>> = x
        .par_chunks(chunk * inner)
        .zip(g.par_chunks(chunk * cols))
        .map(|(xc, gc)| {
            let mut part = vec![0.0; inner * cols];
            matmul_tn_acc(xc, gc, &mut part, xc.len() / inner, inner, cols);
            part
        })
        .collect();
    for part in partials {
        for (o, p) in out.iter_mut().zip(&part) {
            *o += p;
        }
    }
}
