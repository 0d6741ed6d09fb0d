//! Shape-only layers: no parameters, gradients are the inverse permutation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side length of the square that holds `dim` features: `ceil(sqrt(dim))`.
pub fn square_side(dim: usize) -> usize {
    let mut s = (dim as f64).sqrt() as usize;
    while s * s < dim {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= dim {
        s -= 1;
    }
    s
}

/// Places one feature row into a zero-padded `1 × S × S` grid, row-major.
pub fn reshape_square(row: &[f64]) -> Result<Tensor> {
    if row.is_empty() {
        return Err(Error::InvalidSize(
            "cannot reshape an empty feature row".into(),
        ));
    }
    let s = square_side(row.len());
    let mut data = vec![0.0; s * s];
    data[..row.len()].copy_from_slice(row);
    Tensor::new(vec![1, s, s], data)
}

/// `(batch, D)` → `(batch, 1, S, S)` with zero padding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquareReshape {
    dim: usize,
    side: usize,
}

impl SquareReshape {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSize("input dimension must be >= 1".into()));
        }
        Ok(Self {
            dim,
            side: square_side(dim),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.shape()[1] != self.dim {
            return Err(Error::shape(
                "square reshape",
                &[x.shape()[0], self.dim],
                x.shape(),
            ));
        }
        let n = x.rows();
        let area = self.side * self.side;
        let mut data = vec![0.0; n * area];
        for b in 0..n {
            data[b * area..b * area + self.dim].copy_from_slice(x.row(b));
        }
        Tensor::new(vec![n, 1, self.side, self.side], data)
    }

    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let n = grad_out.rows();
        let area = self.side * self.side;
        if grad_out.len() != n * area {
            return Err(Error::shape(
                "square reshape grad",
                &[n, 1, self.side, self.side],
                grad_out.shape(),
            ));
        }
        let mut data = Vec::with_capacity(n * self.dim);
        for b in 0..n {
            data.extend_from_slice(&grad_out.data()[b * area..b * area + self.dim]);
        }
        Tensor::new(vec![n, self.dim], data)
    }
}

/// `(batch, ...)` → `(batch, prod(...))`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Flatten {
    #[serde(skip)]
    in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.in_shape = Some(x.shape().to_vec());
        x.clone().reshape(&[x.rows(), x.row_len()])
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self
            .in_shape
            .as_ref()
            .ok_or(Error::NoCachedForward("flatten"))?;
        grad_out.clone().reshape(shape)
    }
}

/// `(batch, C, H, W)` → `(batch, H, C·W)`: row `t` of every channel becomes timestep `t`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RowsAsSequence {
    #[serde(skip)]
    in_shape: Option<[usize; 4]>,
}

impl RowsAsSequence {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(4, "rows-as-sequence")?;
        let s = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let mut data = vec![0.0; x.len()];
        for b in 0..n {
            for ch in 0..c {
                for t in 0..h {
                    let src = ((b * c + ch) * h + t) * w;
                    let dst = (b * h + t) * c * w + ch * w;
                    data[dst..dst + w].copy_from_slice(&x.data()[src..src + w]);
                }
            }
        }
        self.in_shape = Some(s);
        Tensor::new(vec![n, h, c * w], data)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = self
            .in_shape
            .ok_or(Error::NoCachedForward("rows-as-sequence"))?;
        if grad_out.shape() != [n, h, c * w] {
            return Err(Error::shape(
                "rows-as-sequence grad",
                &[n, h, c * w],
                grad_out.shape(),
            ));
        }
        let mut data = vec![0.0; grad_out.len()];
        for b in 0..n {
            for ch in 0..c {
                for t in 0..h {
                    let dst = ((b * c + ch) * h + t) * w;
                    let src = (b * h + t) * c * w + ch * w;
                    data[dst..dst + w].copy_from_slice(&grad_out.data()[src..src + w]);
                }
            }
        }
        Tensor::new(vec![n, c, h, w], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sides() {
        assert_eq!(square_side(49), 7);
        assert_eq!(square_side(41), 7);
        assert_eq!(square_side(80), 9);
        assert_eq!(square_side(1), 1);
        assert_eq!(square_side(50), 8);
    }

    #[test]
    fn reshape_pads_with_zeros() {
        let row: Vec<f64> = (1..=41).map(f64::from).collect();
        let t = reshape_square(&row).unwrap();
        assert_eq!(t.shape(), &[1, 7, 7]);
        assert_eq!(&t.data()[..41], row.as_slice());
        assert!(t.data()[41..].iter().all(|v| *v == 0.0));
        assert_eq!(t.data()[7], 8.0); // row 1, column 0

        let t = reshape_square(&vec![1.0; 80]).unwrap();
        assert_eq!(t.shape(), &[1, 9, 9]);
        assert_eq!(t.data().iter().filter(|v| **v == 0.0).count(), 1);
        assert!(reshape_square(&[]).is_err());
    }

    #[test]
    fn rows_as_sequence_round_trip() {
        let x = Tensor::new(vec![2, 3, 2, 4], (0..48).map(f64::from).collect()).unwrap();
        let mut r = RowsAsSequence::default();
        let y = r.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2, 12]);
        // sample 0, step 1, channel 2 starts at x[0, 2, 1, 0] = 2*8 + 4
        assert_eq!(y.data()[12 + 8], 20.0);
        assert_eq!(r.backward(&y).unwrap(), x);
    }
}
