use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{Error, Result};
use crate::tensor::{par_matmul_acc, par_matmul_nt_acc, par_matmul_tn_acc, LayerParams, Tensor};

const W: usize = 0;
const B: usize = 1;

#[derive(Debug, Clone)]
struct DenseCache {
    input: Tensor,
    pre: Vec<f64>,
}

/// Fully connected layer computing `σ(x·W + b)`.
///
/// `weight` has shape `(in_dim, out_dim)`, `bias` shape `(out_dim)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    params: LayerParams,
    #[serde(skip)]
    cache: Option<DenseCache>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = Tensor::uniform(&[in_dim, out_dim], s, rng);
        Self::from_parts(weight, Tensor::zeros(&[out_dim]), activation).expect("consistent shapes")
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        weight.expect_rank(2, "dense weight")?;
        let (in_dim, out_dim) = (weight.shape()[0], weight.shape()[1]);
        if bias.shape() != [out_dim] {
            return Err(Error::shape("dense bias", &[out_dim], bias.shape()));
        }
        let mut params = LayerParams::new();
        params.insert("weight", weight);
        params.insert("bias", bias);
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            params,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(2, "dense input")?;
        if x.shape()[1] != self.in_dim {
            return Err(Error::shape(
                "dense input",
                &[x.rows(), self.in_dim],
                x.shape(),
            ));
        }
        let rows = x.rows();
        let mut pre = vec![0.0; rows * self.out_dim];
        let bias = self.params.value(B).data();
        for r in pre.chunks_mut(self.out_dim) {
            r.copy_from_slice(bias);
        }
        par_matmul_acc(
            x.data(),
            self.params.value(W).data(),
            &mut pre,
            rows,
            self.in_dim,
            self.out_dim,
        );
        let out: Vec<f64> = pre.iter().map(|&z| self.activation.apply(z)).collect();
        self.cache = Some(DenseCache {
            input: x.clone(),
            pre,
        });
        Tensor::new(vec![rows, self.out_dim], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or(Error::NoCachedForward("dense"))?;
        let rows = cache.input.rows();
        if grad_out.shape() != [rows, self.out_dim] {
            return Err(Error::shape(
                "dense grad_out",
                &[rows, self.out_dim],
                grad_out.shape(),
            ));
        }
        let dz: Vec<f64> = grad_out
            .data()
            .iter()
            .zip(&cache.pre)
            .map(|(g, &z)| g * self.activation.derivative(z))
            .collect();

        par_matmul_tn_acc(
            cache.input.data(),
            &dz,
            self.params.grad_mut(W).data_mut(),
            rows,
            self.in_dim,
            self.out_dim,
        );
        let db = self.params.grad_mut(B).data_mut();
        for r in dz.chunks(self.out_dim) {
            for (d, g) in db.iter_mut().zip(r) {
                *d += g;
            }
        }
        let mut dx = vec![0.0; rows * self.in_dim];
        par_matmul_nt_acc(
            &dz,
            self.params.value(W).data(),
            &mut dx,
            rows,
            self.in_dim,
            self.out_dim,
        );
        Tensor::new(vec![rows, self.in_dim], dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (n, i_dim, o_dim) = (x.rows(), w.shape()[0], w.shape()[1]);
        let mut out = vec![0.0; n * o_dim];
        for r in 0..n {
            for o in 0..o_dim {
                let mut acc = b.data()[o];
                for i in 0..i_dim {
                    acc += x.data()[r * i_dim + i] * w.data()[i * o_dim + o];
                }
                out[r * o_dim + o] = acc;
            }
        }
        out
    }

    #[test]
    fn zero_weights_sigmoid_is_half() {
        let mut d = Dense::from_parts(
            Tensor::zeros(&[3, 2]),
            Tensor::zeros(&[2]),
            Activation::Sigmoid,
        )
        .unwrap();
        let x = Tensor::new(vec![2, 3], vec![1., -4., 9., 0.3, 2., 7.]).unwrap();
        assert!(d.forward(&x).unwrap().data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn identity_weights_pass_through() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let mut d = Dense::from_parts(w, Tensor::zeros(&[3]), Activation::Identity).unwrap();
        let x = Tensor::new(vec![2, 3], vec![1., -4., 9., 0.3, 2., 7.]).unwrap();
        assert_eq!(d.forward(&x).unwrap(), x);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Tensor::uniform(&[3, 2], 1.0, &mut rng);
        let b = Tensor::uniform(&[2], 1.0, &mut rng);
        let x = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        let mut d = Dense::from_parts(w.clone(), b.clone(), Activation::Identity).unwrap();
        let out = d.forward(&x).unwrap();
        for (a, e) in out.data().iter().zip(naive(&x, &w, &b)) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = Dense::new(3, 2, Activation::Tanh, &mut rng);
        let x = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        d.forward(&x).unwrap();
        let dx = d.backward(&Tensor::zeros(&[4, 2])).unwrap();
        assert!(dx.data().iter().all(|v| *v == 0.0));
        assert!(d
            .params()
            .iter()
            .all(|p| p.grad.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn single_row_weight_grad_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut d = Dense::new(3, 2, Activation::Identity, &mut rng);
        let x = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let g = Tensor::new(vec![1, 2], vec![3.0, -2.0]).unwrap();
        d.forward(&x).unwrap();
        d.backward(&g).unwrap();
        let dw = d.params().get("weight").unwrap().grad.data().to_vec();
        assert_eq!(dw, vec![1.5, -1.0, -3.0, 2.0, 6.0, -4.0]);
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Dense::new(3, 2, Activation::Relu, &mut rng);
        assert!(matches!(
            d.backward(&Tensor::zeros(&[1, 2])),
            Err(Error::NoCachedForward(_))
        ));
        assert!(matches!(
            d.forward(&Tensor::zeros(&[1, 4])),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
