use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::{EdgeBank, EdgeInput};
use crate::error::{Error, Result};
use crate::layers::conv::ConvGeometry;
use crate::spline::SplineGrid;
use crate::tensor::{LayerParams, Tensor};

#[derive(Debug, Clone)]
struct ConvKanCache {
    batch: usize,
    geom: ConvGeometry,
    inputs: Vec<EdgeInput>,
}

/// Convolution whose kernel taps are spline edge functions instead of scalar weights:
///
/// ```text
/// out[b, o, i, j] = Σ_c Σ_m Σ_n φ_{o,c,m,n}(x[b, c, i+m, j+n])
/// ```
///
/// Stride 1, symmetric zero padding (padded taps see `u = 0`). The edge bank has
/// one edge per `(out channel, in channel, kernel row, kernel column)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvKan {
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    padding: usize,
    bank: EdgeBank,
    #[serde(skip)]
    cache: Option<ConvKanCache>,
}

impl ConvKan {
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        padding: usize,
        grid: SplineGrid,
        rng: &mut R,
    ) -> Self {
        Self {
            c_in,
            c_out,
            kh: kernel,
            kw: kernel,
            padding,
            bank: EdgeBank::new(c_in * kernel * kernel, c_out, grid, rng),
            cache: None,
        }
    }

    pub fn c_out(&self) -> usize {
        self.c_out
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

    /// Edge function for output channel `o`, input channel `c`, kernel tap `(m, n)`.
    pub fn tap(&self, o: usize, c: usize, m: usize, n: usize, u: f64) -> Result<f64> {
        if c >= self.c_in || m >= self.kh || n >= self.kw {
            return Err(Error::IndexOutOfRange(format!("tap ({o}, {c}, {m}, {n})")));
        }
        self.bank.edge((c * self.kh + m) * self.kw + n, o, u)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let g = ConvGeometry::new(self.c_in, h, w, self.kh, self.kw, self.padding)?;
        Ok((g.out_h(), g.out_w()))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(4, "convkan input")?;
        let s = x.shape();
        if s[1] != self.c_in {
            return Err(Error::shape(
                "convkan input",
                &[s[0], self.c_in, s[2], s[3]],
                s,
            ));
        }
        let batch = s[0];
        let geom = ConvGeometry::new(self.c_in, s[2], s[3], self.kh, self.kw, self.padding)?;
        let (pn, kn) = (geom.positions(), geom.patch());

        let mut cols = vec![0.0; batch * pn * kn];
        cols.par_chunks_mut(pn * kn)
            .enumerate()
            .for_each(|(b, c)| c.copy_from_slice(&geom.im2col(x.row(b))));
        let (rows_out, inputs) = self.bank.forward_rows(&cols, batch * pn)?;

        let c_out = self.c_out;
        let mut out = vec![0.0; batch * c_out * pn];
        for b in 0..batch {
            for p in 0..pn {
                for o in 0..c_out {
                    out[(b * c_out + o) * pn + p] = rows_out[(b * pn + p) * c_out + o];
                }
            }
        }
        self.cache = Some(ConvKanCache {
            batch,
            geom,
            inputs,
        });
        Tensor::new(vec![batch, c_out, geom.out_h(), geom.out_w()], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(Error::NoCachedForward("convkan"))?;
        let geom = cache.geom;
        let (pn, kn) = (geom.positions(), geom.patch());
        let c_out = self.c_out;
        let expect = [cache.batch, c_out, geom.out_h(), geom.out_w()];
        if grad_out.shape() != expect {
            self.cache = Some(cache);
            return Err(Error::shape("convkan grad_out", &expect, grad_out.shape()));
        }
        let mut g_rows = vec![0.0; cache.batch * pn * c_out];
        for b in 0..cache.batch {
            for o in 0..c_out {
                for p in 0..pn {
                    g_rows[(b * pn + p) * c_out + o] = grad_out.data()[(b * c_out + o) * pn + p];
                }
            }
        }
        let dcols = self
            .bank
            .backward_rows(&cache.inputs, &g_rows, cache.batch * pn);
        let mut dx = vec![0.0; cache.batch * geom.sample_len()];
        dx.par_chunks_mut(geom.sample_len())
            .enumerate()
            .for_each(|(b, d)| geom.col2im(&dcols[b * pn * kn..(b + 1) * pn * kn], d));
        let batch = cache.batch;
        self.cache = Some(cache);
        Tensor::new(vec![batch, self.c_in, geom.h, geom.w], dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::KanLinear;
    use crate::spline::make_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> SplineGrid {
        make_grid(-1.0, 1.0, 5, 3).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut c = ConvKan::new(2, 3, 3, 1, grid(), &mut rng);
        for p in c.params_mut().iter_mut() {
            p.value.fill(0.0);
        }
        let x = Tensor::uniform(&[2, 2, 4, 4], 1.0, &mut rng);
        assert!(c.forward(&x).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_kernel_is_pixelwise_kan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = ConvKan::new(1, 1, 1, 0, grid(), &mut rng);
        let p = c.params();
        let mut k = KanLinear::from_parts(
            grid(),
            p.get("spline_coeffs").unwrap().value.clone(),
            p.get("base_weight").unwrap().value.clone(),
            p.get("edge_scale").unwrap().value.clone(),
        )
        .unwrap();
        let x = Tensor::uniform(&[2, 1, 3, 4], 1.0, &mut rng);
        let y = c.forward(&x).unwrap();
        let flat = x.clone().reshape(&[24, 1]).unwrap();
        let yk = k.forward(&flat).unwrap();
        assert_eq!(y.data(), yk.data());
    }

    #[test]
    fn matches_loop_over_taps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = ConvKan::new(2, 2, 3, 0, grid(), &mut rng);
        let x = Tensor::uniform(&[1, 2, 5, 5], 1.0, &mut rng);
        let y = c.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 3, 3]);
        for o in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = 0.0;
                    for ch in 0..2 {
                        for m in 0..3 {
                            for n in 0..3 {
                                acc += c
                                    .tap(o, ch, m, n, x.data()[(ch * 5 + i + m) * 5 + j + n])
                                    .unwrap();
                            }
                        }
                    }
                    assert!((y.data()[(o * 3 + i) * 3 + j] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = ConvKan::new(2, 3, 3, 1, grid(), &mut rng);
        assert_eq!(c.params().count(), 3 * 2 * 9 * 10);
    }
}
