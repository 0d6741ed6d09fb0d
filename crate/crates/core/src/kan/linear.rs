use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{silu, silu_derivative};
use crate::spline::{LocalBasis, SplineGrid};
use crate::tensor::{reduce_chunk, LayerParams, Tensor};

pub(crate) const COEFFS: usize = 0;
pub(crate) const BASE: usize = 1;
pub(crate) const SCALE: usize = 2;

/// Per-input-element evaluation kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EdgeInput {
    basis: LocalBasis,
    silu: f64,
    silu_deriv: f64,
}

/// Bank of `out × in` spline edge functions over a shared grid.
///
/// Edge `(j, i)` computes `a[j,i] · (base[j,i] · silu(u) + Σ_k coeffs[j,i,k] · B_k(u))`.
/// Used directly by [`KanLinear`] and over unfolded patches by `ConvKan`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct EdgeBank {
    pub in_dim: usize,
    pub out_dim: usize,
    pub grid: SplineGrid,
    pub params: LayerParams,
}

impl EdgeBank {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        grid: SplineGrid,
        rng: &mut R,
    ) -> Self {
        let nb = grid.basis_count();
        let coeff_bound = 0.1 / (nb as f64).sqrt();
        let base_bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut params = LayerParams::new();
        params.insert(
            "spline_coeffs",
            Tensor::uniform(&[out_dim, in_dim, nb], coeff_bound, rng),
        );
        params.insert(
            "base_weight",
            Tensor::uniform(&[out_dim, in_dim], base_bound, rng),
        );
        params.insert("edge_scale", Tensor::full(&[out_dim, in_dim], 1.0));
        Self {
            in_dim,
            out_dim,
            grid,
            params,
        }
    }

    pub fn from_parts(
        grid: SplineGrid,
        coeffs: Tensor,
        base: Tensor,
        scale: Tensor,
    ) -> Result<Self> {
        coeffs.expect_rank(3, "spline_coeffs")?;
        let (out_dim, in_dim, nb) = (coeffs.shape()[0], coeffs.shape()[1], coeffs.shape()[2]);
        if nb != grid.basis_count() {
            return Err(Error::shape(
                "spline_coeffs",
                &[out_dim, in_dim, grid.basis_count()],
                coeffs.shape(),
            ));
        }
        for (name, t) in [("base_weight", &base), ("edge_scale", &scale)] {
            if t.shape() != [out_dim, in_dim] {
                return Err(Error::ShapeMismatch {
                    context: if name == "base_weight" {
                        "base_weight"
                    } else {
                        "edge_scale"
                    },
                    expected: vec![out_dim, in_dim],
                    actual: t.shape().to_vec(),
                });
            }
        }
        let mut params = LayerParams::new();
        params.insert("spline_coeffs", coeffs);
        params.insert("base_weight", base);
        params.insert("edge_scale", scale);
        Ok(Self {
            in_dim,
            out_dim,
            grid,
            params,
        })
    }

    /// `a[j,i] · φ_{j,i}(u)` for a single edge.
    pub fn edge(&self, i: usize, j: usize, u: f64) -> Result<f64> {
        if i >= self.in_dim || j >= self.out_dim {
            return Err(Error::IndexOutOfRange(format!(
                "edge ({j}, {i}) of a {}x{} layer",
                self.out_dim, self.in_dim
            )));
        }
        let e = self.eval_input(u)?;
        Ok(self.edge_value(j, i, &e).0)
    }

    fn eval_input(&self, u: f64) -> Result<EdgeInput> {
        Ok(EdgeInput {
            basis: self.grid.eval_local(u)?,
            silu: silu(u),
            silu_deriv: silu_derivative(u),
        })
    }

    /// Returns `(a·φ(u), φ(u))`.
    #[inline]
    fn edge_value(&self, j: usize, i: usize, e: &EdgeInput) -> (f64, f64) {
        let nb = self.grid.basis_count();
        let edge = j * self.in_dim + i;
        let coeffs = &self.params.value(COEFFS).data()[edge * nb..(edge + 1) * nb];
        let mut phi = self.params.value(BASE).data()[edge] * e.silu;
        for (k, b, _) in e.basis.iter() {
            phi += coeffs[k] * b;
        }
        (self.params.value(SCALE).data()[edge] * phi, phi)
    }

    /// Forward over `rows × in_dim` inputs; returns `rows × out_dim` outputs and the cache.
    pub fn forward_rows(&self, x: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<EdgeInput>)> {
        debug_assert_eq!(x.len(), rows * self.in_dim);
        let inputs = x
            .par_iter()
            .map(|&u| self.eval_input(u))
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![0.0; rows * self.out_dim];
        out.par_chunks_mut(self.out_dim)
            .enumerate()
            .for_each(|(b, o)| {
                let row = &inputs[b * self.in_dim..(b + 1) * self.in_dim];
                for (j, oj) in o.iter_mut().enumerate() {
                    *oj = row
                        .iter()
                        .enumerate()
                        .map(|(i, e)| self.edge_value(j, i, e).0)
                        .sum();
                }
            });
        Ok((out, inputs))
    }

    /// Accumulates parameter gradients and returns `dL/dx` (`rows × in_dim`).
    pub fn backward_rows(&mut self, inputs: &[EdgeInput], grad: &[f64], rows: usize) -> Vec<f64> {
        let (n_in, n_out) = (self.in_dim, self.out_dim);
        let nb = self.grid.basis_count();
        let coeffs = self.params.value(COEFFS).data();
        let base = self.params.value(BASE).data();
        let scale = self.params.value(SCALE).data();

        let chunk_rows = reduce_chunk(rows);
        let mut dx = vec![0.0; rows * n_in];
        let partials: Vec<[Vec<f64>; 3]> = dx
            .par_chunks_mut(chunk_rows * n_in)
            .enumerate()
            .map(|(chunk, dxc)| {
                let mut dc = vec![0.0; n_out * n_in * nb];
                let mut dbase = vec![0.0; n_out * n_in];
                let mut dscale = vec![0.0; n_out * n_in];
                for (local, dxr) in dxc.chunks_mut(n_in).enumerate() {
                    let b = chunk * chunk_rows + local;
                    let g = &grad[b * n_out..(b + 1) * n_out];
                    for (i, dxi) in dxr.iter_mut().enumerate() {
                        let e = &inputs[b * n_in + i];
                        for (j, &gj) in g.iter().enumerate() {
                            if gj == 0.0 {
                                continue;
                            }
                            let edge = j * n_in + i;
                            let cs = &coeffs[edge * nb..(edge + 1) * nb];
                            let a = scale[edge];
                            let mut phi = base[edge] * e.silu;
                            let mut dphi = base[edge] * e.silu_deriv;
                            let ga = gj * a;
                            let dce = &mut dc[edge * nb..(edge + 1) * nb];
                            for (k, v, d) in e.basis.iter() {
                                phi += cs[k] * v;
                                dphi += cs[k] * d;
                                dce[k] += ga * v;
                            }
                            dbase[edge] += ga * e.silu;
                            dscale[edge] += gj * phi;
                            *dxi += ga * dphi;
                        }
                    }
                }
                [dc, dbase, dscale]
            })
            .collect();

        for part in partials {
            for (slot, p) in [COEFFS, BASE, SCALE].into_iter().zip(part.iter()) {
                for (acc, v) in self.params.grad_mut(slot).data_mut().iter_mut().zip(p) {
                    *acc += v;
                }
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
struct KanCache {
    rows: usize,
    inputs: Vec<EdgeInput>,
}

/// KAN layer mapping `(batch, in_dim)` to `(batch, out_dim)` through learnable edge functions.
///
/// Parameters: `spline_coeffs (out, in, G + r)`, `base_weight (out, in)`,
/// `edge_scale (out, in)`; `in · out · (G + r + 2)` scalars in total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KanLinear {
    bank: EdgeBank,
    #[serde(skip)]
    cache: Option<KanCache>,
}

impl KanLinear {
    /// Coefficients ~ U(−0.1, 0.1)/√(G + r), Glorot-uniform base weights, unit edge scales.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        grid: SplineGrid,
        rng: &mut R,
    ) -> Self {
        Self {
            bank: EdgeBank::new(in_dim, out_dim, grid, rng),
            cache: None,
        }
    }

    pub fn from_parts(
        grid: SplineGrid,
        spline_coeffs: Tensor,
        base_weight: Tensor,
        edge_scale: Tensor,
    ) -> Result<Self> {
        Ok(Self {
            bank: EdgeBank::from_parts(grid, spline_coeffs, base_weight, edge_scale)?,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.bank.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bank.out_dim
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.bank.grid
    }

    pub fn params(&self) -> &LayerParams {
        &self.bank.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.bank.params
    }

    /// Contribution of the edge from input `i` to output `j` at `u`.
    pub fn edge(&self, i: usize, j: usize, u: f64) -> Result<f64> {
        self.bank.edge(i, j, u)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(2, "kan input")?;
        if x.shape()[1] != self.bank.in_dim {
            return Err(Error::shape(
                "kan input",
                &[x.rows(), self.bank.in_dim],
                x.shape(),
            ));
        }
        let rows = x.rows();
        let (out, inputs) = self.bank.forward_rows(x.data(), rows)?;
        self.cache = Some(KanCache { rows, inputs });
        Tensor::new(vec![rows, self.bank.out_dim], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or(Error::NoCachedForward("kan_linear"))?;
        if grad_out.shape() != [cache.rows, self.bank.out_dim] {
            let expected = [cache.rows, self.bank.out_dim];
            self.cache = Some(cache);
            return Err(Error::shape("kan grad_out", &expected, grad_out.shape()));
        }
        let dx = self
            .bank
            .backward_rows(&cache.inputs, grad_out.data(), cache.rows);
        let rows = cache.rows;
        self.cache = Some(cache);
        Tensor::new(vec![rows, self.bank.in_dim], dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::make_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> SplineGrid {
        make_grid(-1.0, 1.0, 5, 3).unwrap()
    }

    fn zero_layer(i: usize, o: usize) -> KanLinear {
        let nb = grid().basis_count();
        KanLinear::from_parts(
            grid(),
            Tensor::zeros(&[o, i, nb]),
            Tensor::zeros(&[o, i]),
            Tensor::full(&[o, i], 1.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_parameters_give_zero() {
        let mut l = zero_layer(3, 2);
        for u in [-3.0, -0.2, 0.0, 0.9, 4.0] {
            assert_eq!(l.edge(1, 0, u).unwrap(), 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        assert!(l.forward(&x).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn silu_base_vanishes_at_zero() {
        let mut l = zero_layer(1, 1);
        l.params_mut()
            .get_mut("base_weight")
            .unwrap()
            .value
            .fill(1.0);
        assert_eq!(l.edge(0, 0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn one_hot_coefficient_scales_basis() {
        let mut l = zero_layer(2, 3);
        let nb = grid().basis_count();
        let (i, j, k, c, a) = (1, 2, 4, 0.7, -1.3);
        l.params_mut()
            .get_mut("spline_coeffs")
            .unwrap()
            .value
            .data_mut()[(j * 2 + i) * nb + k] = c;
        l.params_mut()
            .get_mut("edge_scale")
            .unwrap()
            .value
            .data_mut()[j * 2 + i] = a;
        for u in [-0.9, -0.1, 0.35, 0.8] {
            let expect = a * c * grid().eval_basis(u).unwrap().values[k];
            assert!((l.edge(i, j, u).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_equals_edge_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut l = KanLinear::new(3, 2, grid(), &mut rng);
        l.params_mut().get_mut("edge_scale").unwrap().value =
            Tensor::uniform(&[2, 3], 1.5, &mut rng);
        let x = Tensor::uniform(&[4, 3], 1.2, &mut rng);
        let y = l.forward(&x).unwrap();
        for b in 0..4 {
            for j in 0..2 {
                let mut acc = 0.0;
                for i in 0..3 {
                    acc += l.edge(i, j, x.data()[b * 3 + i]).unwrap();
                }
                assert!((y.data()[b * 2 + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_edge_input_grad_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut l = KanLinear::new(1, 1, grid(), &mut rng);
        l.params_mut()
            .get_mut("edge_scale")
            .unwrap()
            .value
            .fill(0.8);
        let u = 0.27;
        let g = 1.7;
        l.forward(&Tensor::new(vec![1, 1], vec![u]).unwrap())
            .unwrap();
        let dx = l
            .backward(&Tensor::new(vec![1, 1], vec![g]).unwrap())
            .unwrap();
        let base = l.params().get("base_weight").unwrap().value.data()[0];
        let cs = l
            .params()
            .get("spline_coeffs")
            .unwrap()
            .value
            .data()
            .to_vec();
        let be = grid().eval_basis(u).unwrap();
        let dphi =
            base * silu_derivative(u) + cs.iter().zip(&be.derivs).map(|(c, d)| c * d).sum::<f64>();
        assert!((dx.data()[0] - 0.8 * dphi * g).abs() < 1e-14);
    }

    #[test]
    fn zero_grad_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut l = KanLinear::new(3, 2, grid(), &mut rng);
        l.forward(&Tensor::uniform(&[4, 3], 1.0, &mut rng)).unwrap();
        let dx = l.backward(&Tensor::zeros(&[4, 2])).unwrap();
        assert!(dx.data().iter().all(|v| *v == 0.0));
        assert!(l
            .params()
            .iter()
            .all(|p| p.grad.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = KanLinear::new(41, 64, grid(), &mut rng);
        assert_eq!(l.params().count(), 41 * 64 * (5 + 3 + 2));
    }

    #[test]
    fn errors() {
        let mut l = zero_layer(3, 2);
        assert!(matches!(l.edge(3, 0, 0.0), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(l.edge(0, 2, 0.0), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(
            l.backward(&Tensor::zeros(&[1, 2])),
            Err(Error::NoCachedForward(_))
        ));
        assert!(matches!(
            l.forward(&Tensor::zeros(&[1, 2])),
            Err(Error::ShapeMismatch { .. })
        ));
        let x = Tensor::new(vec![1, 3], vec![0.0, f64::NAN, 0.0]).unwrap();
        assert!(matches!(l.forward(&x), Err(Error::NonFiniteInput(_))));
    }
}
