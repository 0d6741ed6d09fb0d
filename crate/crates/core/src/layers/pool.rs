use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
struct PoolCache {
    in_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Non-overlapping max pooling over `(batch, C, H, W)`.
///
/// Edges that do not fill a whole window are padded with −∞. Backward routes
/// each gradient to the first maximal element of its window (lowest flat index).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxPool2d {
    window: usize,
    #[serde(skip)]
    cache: Option<PoolCache>,
}

impl MaxPool2d {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidSize("pool window must be >= 1".into()));
        }
        Ok(Self {
            window,
            cache: None,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.window), w.div_ceil(self.window))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(4, "maxpool input")?;
        let s = x.shape();
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = self.output_hw(h, w);
        let k = self.window;
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    // row-major scan with strict `>` keeps the lowest index on ties
                    for y in i * k..((i + 1) * k).min(h) {
                        for xx in j * k..((j + 1) * k).min(w) {
                            let idx = base + y * w + xx;
                            let v = x.data()[idx];
                            if best_idx == usize::MAX || v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        self.cache = Some(PoolCache {
            in_shape: s.to_vec(),
            argmax,
        });
        Tensor::new(vec![n, c, oh, ow], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::NoCachedForward("maxpool2d"))?;
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::shape(
                "maxpool grad_out",
                &[cache.argmax.len()],
                &[grad_out.len()],
            ));
        }
        let mut dx = Tensor::zeros(&cache.in_shape);
        for (g, &idx) in grad_out.data().iter().zip(&cache.argmax) {
            dx.data_mut()[idx] += g;
        }
        Ok(dx)
    }
}
