use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Activation, CHUNK};
use crate::error::{Error, Result};
use crate::tensor::{LayerParams, Tensor};

const W: usize = 0;
const B: usize = 1;

/// Spatial geometry of a stride-1 convolution over one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(c_in: usize, h: usize, w: usize, kh: usize, kw: usize, pad: usize) -> Result<Self> {
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::KernelLargerThanInput {
                kernel: [kh, kw],
                input: [h + 2 * pad, w + 2 * pad],
            });
        }
        Ok(Self {
            c_in,
            h,
            w,
            kh,
            kw,
            pad,
        })
    }

    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad - self.kh + 1
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad - self.kw + 1
    }

    /// Output positions per channel.
    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Patch length `c_in · kh · kw`.
    pub fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn sample_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    /// Input flat index feeding patch slot `k` at position `p`, or `None` for padding.
    #[inline]
    pub fn source(&self, p: usize, k: usize) -> Option<usize> {
        let (i, j) = (p / self.out_w(), p % self.out_w());
        let c = k / (self.kh * self.kw);
        let m = (k / self.kw) % self.kh;
        let n = k % self.kw;
        let y = (i + m).checked_sub(self.pad)?;
        let x = (j + n).checked_sub(self.pad)?;
        if y >= self.h || x >= self.w {
            return None;
        }
        Some((c * self.h + y) * self.w + x)
    }

    /// Unfolds one sample into a `(positions, patch)` matrix; padding reads as zero.
    pub fn im2col(&self, sample: &[f64]) -> Vec<f64> {
        let (pn, kn) = (self.positions(), self.patch());
        let mut cols = vec![0.0; pn * kn];
        for p in 0..pn {
            for k in 0..kn {
                if let Some(src) = self.source(p, k) {
                    cols[p * kn + k] = sample[src];
                }
            }
        }
        cols
    }

    /// Scatter-adds a `(positions, patch)` gradient back onto the input sample.
    pub fn col2im(&self, dcols: &[f64], dx: &mut [f64]) {
        let (pn, kn) = (self.positions(), self.patch());
        for p in 0..pn {
            for k in 0..kn {
                if let Some(src) = self.source(p, k) {
                    dx[src] += dcols[p * kn + k];
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ConvCache {
    batch: usize,
    geom: ConvGeometry,
    cols: Vec<f64>,
    pre: Vec<f64>,
}

/// Stride-1 2-D convolution with symmetric zero padding and a pointwise activation.
///
/// `weight` has shape `(c_out, c_in, kh, kw)`; input is `(batch, c_in, H, W)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d {
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    padding: usize,
    activation: Activation,
    params: LayerParams,
    #[serde(skip)]
    cache: Option<ConvCache>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        padding: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let fan_out = c_out * kernel * kernel;
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Tensor::uniform(&[c_out, c_in, kernel, kernel], s, rng);
        Self::from_parts(weight, Tensor::zeros(&[c_out]), padding, activation)
            .expect("consistent shapes")
    }

    pub fn from_parts(
        weight: Tensor,
        bias: Tensor,
        padding: usize,
        activation: Activation,
    ) -> Result<Self> {
        weight.expect_rank(4, "conv weight")?;
        let s = weight.shape().to_vec();
        if bias.shape() != [s[0]] {
            return Err(Error::shape("conv bias", &[s[0]], bias.shape()));
        }
        let mut params = LayerParams::new();
        params.insert("weight", weight);
        params.insert("bias", bias);
        Ok(Self {
            c_in: s[1],
            c_out: s[0],
            kh: s[2],
            kw: s[3],
            padding,
            activation,
            params,
            cache: None,
        })
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    /// Output `(H, W)` for an input of spatial size `(h, w)`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let g = ConvGeometry::new(self.c_in, h, w, self.kh, self.kw, self.padding)?;
        Ok((g.out_h(), g.out_w()))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(4, "conv input")?;
        let s = x.shape();
        if s[1] != self.c_in {
            return Err(Error::shape(
                "conv input",
                &[s[0], self.c_in, s[2], s[3]],
                s,
            ));
        }
        let batch = s[0];
        let geom = ConvGeometry::new(self.c_in, s[2], s[3], self.kh, self.kw, self.padding)?;
        let (pn, kn) = (geom.positions(), geom.patch());
        let weight = self.params.value(W).data();
        let bias = self.params.value(B).data();
        let c_out = self.c_out;

        let mut cols = vec![0.0; batch * pn * kn];
        let mut pre = vec![0.0; batch * c_out * pn];
        cols.par_chunks_mut(pn * kn)
            .zip(pre.par_chunks_mut(c_out * pn))
            .enumerate()
            .for_each(|(b, (cb, zb))| {
                cb.copy_from_slice(&geom.im2col(x.row(b)));
                for o in 0..c_out {
                    let wo = &weight[o * kn..(o + 1) * kn];
                    for p in 0..pn {
                        let patch = &cb[p * kn..(p + 1) * kn];
                        zb[o * pn + p] =
                            bias[o] + wo.iter().zip(patch).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            });
        let out: Vec<f64> = pre.iter().map(|&z| self.activation.apply(z)).collect();
        self.cache = Some(ConvCache {
            batch,
            geom,
            cols,
            pre,
        });
        Tensor::new(vec![batch, c_out, geom.out_h(), geom.out_w()], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::NoCachedForward("conv2d"))?;
        let geom = cache.geom;
        let (pn, kn) = (geom.positions(), geom.patch());
        let expect = [cache.batch, self.c_out, geom.out_h(), geom.out_w()];
        if grad_out.shape() != expect {
            return Err(Error::shape("conv grad_out", &expect, grad_out.shape()));
        }
        let c_out = self.c_out;
        let act = self.activation;
        let weight = self.params.value(W).data().to_vec();
        let sample_out = c_out * pn;

        let mut dx = vec![0.0; cache.batch * geom.sample_len()];
        // Fixed-size chunks reduced in order keep the result independent of thread count.
        let partials: Vec<(Vec<f64>, Vec<f64>)> = dx
            .par_chunks_mut(CHUNK * geom.sample_len())
            .enumerate()
            .map(|(chunk, dxc)| {
                let mut dw = vec![0.0; c_out * kn];
                let mut db = vec![0.0; c_out];
                for (local, dxs) in dxc.chunks_mut(geom.sample_len()).enumerate() {
                    let b = chunk * CHUNK + local;
                    let cb = &cache.cols[b * pn * kn..(b + 1) * pn * kn];
                    let zb = &cache.pre[b * sample_out..(b + 1) * sample_out];
                    let gb = grad_out.row(b);
                    let mut dcols = vec![0.0; pn * kn];
                    for o in 0..c_out {
                        let wo = &weight[o * kn..(o + 1) * kn];
                        let dwo = &mut dw[o * kn..(o + 1) * kn];
                        for p in 0..pn {
                            let dz = gb[o * pn + p] * act.derivative(zb[o * pn + p]);
                            if dz == 0.0 {
                                continue;
                            }
                            db[o] += dz;
                            let patch = &cb[p * kn..(p + 1) * kn];
                            for (d, v) in dwo.iter_mut().zip(patch) {
                                *d += dz * v;
                            }
                            for (d, w) in dcols[p * kn..(p + 1) * kn].iter_mut().zip(wo) {
                                *d += dz * w;
                            }
                        }
                    }
                    geom.col2im(&dcols, dxs);
                }
                (dw, db)
            })
            .collect();

        for (dw, db) in partials {
            for (g, d) in self.params.grad_mut(W).data_mut().iter_mut().zip(&dw) {
                *g += d;
            }
            for (g, d) in self.params.grad_mut(B).data_mut().iter_mut().zip(&db) {
                *g += d;
            }
        }
        Tensor::new(vec![cache.batch, self.c_in, geom.h, geom.w], dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct six-deep loop, valid (unpadded) convolution.
    fn naive(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (o_n, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
        let (oh, ow) = (h - kh + 1, wd - kw + 1);
        let mut out = vec![0.0; n * o_n * oh * ow];
        for s in 0..n {
            for o in 0..o_n {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = b.data()[o];
                        for ci in 0..c {
                            for m in 0..kh {
                                for q in 0..kw {
                                    acc += w.data()[((o * c + ci) * kh + m) * kw + q]
                                        * x.data()[((s * c + ci) * h + i + m) * wd + j + q];
                                }
                            }
                        }
                        out[((s * o_n + o) * oh + i) * ow + j] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut c = Conv2d::from_parts(
            Tensor::full(&[1, 1, 1, 1], 1.0),
            Tensor::zeros(&[1]),
            0,
            Activation::Identity,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::uniform(&[2, 1, 4, 3], 1.0, &mut rng);
        assert_eq!(c.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_kernel_constant_bias() {
        let mut c = Conv2d::from_parts(
            Tensor::zeros(&[1, 1, 3, 3]),
            Tensor::full(&[1], 5.0),
            0,
            Activation::Identity,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::uniform(&[1, 1, 5, 5], 1.0, &mut rng);
        let y = c.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert!(y.data().iter().all(|v| *v == 5.0));
    }

    #[test]
    fn matches_six_deep_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Tensor::uniform(&[2, 1, 3, 3], 1.0, &mut rng);
        let b = Tensor::uniform(&[2], 1.0, &mut rng);
        let x = Tensor::uniform(&[1, 1, 5, 5], 1.0, &mut rng);
        let mut c = Conv2d::from_parts(w.clone(), b.clone(), 0, Activation::Identity).unwrap();
        let y = c.forward(&x).unwrap();
        for (a, e) in y.data().iter().zip(naive(&x, &w, &b)) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pixel_grad_picks_patch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = Tensor::uniform(&[1, 1, 3, 3], 1.0, &mut rng);
        let x = Tensor::uniform(&[1, 1, 5, 5], 1.0, &mut rng);
        let mut c = Conv2d::from_parts(w, Tensor::zeros(&[1]), 0, Activation::Identity).unwrap();
        c.forward(&x).unwrap();
        let mut g = Tensor::zeros(&[1, 1, 3, 3]);
        g.data_mut()[3 + 2] = 1.0; // output pixel (1, 2)
        c.backward(&g).unwrap();
        let dw = c.params().get("weight").unwrap().grad.data();
        for m in 0..3 {
            for n in 0..3 {
                assert_eq!(dw[m * 3 + n], x.data()[(1 + m) * 5 + 2 + n]);
            }
        }
    }

    #[test]
    fn zero_grad_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = Conv2d::new(2, 3, 3, 1, Activation::Relu, &mut rng);
        let x = Tensor::uniform(&[3, 2, 4, 4], 1.0, &mut rng);
        c.forward(&x).unwrap();
        let dx = c.backward(&Tensor::zeros(&[3, 3, 4, 4])).unwrap();
        assert!(dx.data().iter().all(|v| *v == 0.0));
        assert!(c
            .params()
            .iter()
            .all(|p| p.grad.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn kernel_larger_than_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = Conv2d::new(1, 1, 5, 0, Activation::Relu, &mut rng);
        let x = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(matches!(
            c.forward(&x),
            Err(Error::KernelLargerThanInput { .. })
        ));
        let mut c = Conv2d::new(1, 1, 5, 1, Activation::Relu, &mut rng);
        assert!(c.forward(&x).is_ok());
    }
}
