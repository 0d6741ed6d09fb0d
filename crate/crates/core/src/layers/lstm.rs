use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use crate::error::{Error, Result};
use crate::tensor::{par_matmul_acc, par_matmul_nt_acc, par_matmul_tn_acc, LayerParams, Tensor};

/// Gate order within the parameter list: forget, input, output, candidate.
const GATES: [&str; 4] = ["f", "i", "o", "c"];
const F: usize = 0;
const I: usize = 1;
const O: usize = 2;
const C: usize = 3;

/// Hidden and cell state, each `(batch, hidden)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            hidden: Tensor::zeros(&[batch, hidden]),
            cell: Tensor::zeros(&[batch, hidden]),
        }
    }
}

/// Intermediates of one cell step, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct StepCache {
    concat: Vec<f64>,
    gates: [Vec<f64>; 4],
    cell_prev: Vec<f64>,
    tanh_cell: Vec<f64>,
}

#[derive(Debug, Clone)]
struct SeqCache {
    batch: usize,
    steps: Vec<StepCache>,
}

/// Single-layer unidirectional LSTM.
///
/// Each gate matrix `W_g` has shape `(hidden, hidden + in_dim)` and multiplies
/// the concatenation `[h_{t-1}, z_t]`:
///
/// ```text
/// f = σ(W_f [h, z] + b_f)    i = σ(W_i [h, z] + b_i)    o = σ(W_o [h, z] + b_o)
/// c̃ = tanh(W_c [h, z] + b_c)
/// c_t = f ⊙ c_{t-1} + i ⊙ c̃      h_t = o ⊙ tanh(c_t)
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lstm {
    in_dim: usize,
    hidden: usize,
    params: LayerParams,
    #[serde(skip)]
    cache: Option<SeqCache>,
}

impl Lstm {
    /// Glorot-uniform gate weights; forget bias 1, other biases 0.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let k = hidden + in_dim;
        let s = (6.0 / (k + hidden) as f64).sqrt();
        let mut params = LayerParams::new();
        for g in GATES {
            params.insert(&format!("W_{g}"), Tensor::uniform(&[hidden, k], s, rng));
            let b = if g == "f" { 1.0 } else { 0.0 };
            params.insert(&format!("b_{g}"), Tensor::full(&[hidden], b));
        }
        Self {
            in_dim,
            hidden,
            params,
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    fn weight_slot(g: usize) -> usize {
        2 * g
    }

    fn bias_slot(g: usize) -> usize {
        2 * g + 1
    }

    /// One cell update from `state` with input `z` of shape `(batch, in_dim)`.
    pub fn step(&self, state: &LstmState, z: &Tensor) -> Result<(LstmState, StepCache)> {
        z.expect_rank(2, "lstm input")?;
        let batch = z.rows();
        if z.shape()[1] != self.in_dim {
            return Err(Error::shape("lstm input", &[batch, self.in_dim], z.shape()));
        }
        let hs = [batch, self.hidden];
        if state.hidden.shape() != hs || state.cell.shape() != hs {
            return Err(Error::shape("lstm state", &hs, state.hidden.shape()));
        }
        let (h, k) = (self.hidden, self.hidden + self.in_dim);

        let mut concat = Vec::with_capacity(batch * k);
        for b in 0..batch {
            concat.extend_from_slice(state.hidden.row(b));
            concat.extend_from_slice(z.row(b));
        }

        let gates: [Vec<f64>; 4] = std::array::from_fn(|g| {
            let mut pre = vec![0.0; batch * h];
            let bias = self.params.value(Self::bias_slot(g)).data();
            for r in pre.chunks_mut(h) {
                r.copy_from_slice(bias);
            }
            par_matmul_nt_acc(
                &concat,
                self.params.value(Self::weight_slot(g)).data(),
                &mut pre,
                batch,
                h,
                k,
            );
            if g == C {
                pre.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                pre.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            pre
        });

        let cell_prev = state.cell.data().to_vec();
        let mut cell = vec![0.0; batch * h];
        let mut tanh_cell = vec![0.0; batch * h];
        let mut hidden = vec![0.0; batch * h];
        for n in 0..batch * h {
            cell[n] = gates[F][n] * cell_prev[n] + gates[I][n] * gates[C][n];
            tanh_cell[n] = cell[n].tanh();
            hidden[n] = gates[O][n] * tanh_cell[n];
        }
        let next = LstmState {
            hidden: Tensor::new(hs.to_vec(), hidden)?,
            cell: Tensor::new(hs.to_vec(), cell)?,
        };
        Ok((
            next,
            StepCache {
                concat,
                gates,
                cell_prev,
                tanh_cell,
            },
        ))
    }

    /// Runs `xs` of shape `(batch, T, in_dim)` from a zero state and returns `h_T`.
    pub fn forward(&mut self, xs: &Tensor) -> Result<Tensor> {
        xs.expect_rank(3, "lstm sequence")?;
        let (batch, steps, d) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
        if steps == 0 {
            return Err(Error::EmptySequence);
        }
        if d != self.in_dim {
            return Err(Error::shape(
                "lstm sequence",
                &[batch, steps, self.in_dim],
                xs.shape(),
            ));
        }
        let mut state = LstmState::zeros(batch, self.hidden);
        let mut caches = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut z = Vec::with_capacity(batch * d);
            for b in 0..batch {
                let base = (b * steps + t) * d;
                z.extend_from_slice(&xs.data()[base..base + d]);
            }
            let (next, cache) = self.step(&state, &Tensor::new(vec![batch, d], z)?)?;
            state = next;
            caches.push(cache);
        }
        self.cache = Some(SeqCache {
            batch,
            steps: caches,
        });
        Ok(state.hidden)
    }

    /// Backpropagation through time from `dL/dh_T`; returns `dL/dxs`.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(Error::NoCachedForward("lstm"))?;
        let result = self.backward_cached(&cache, grad_out);
        self.cache = Some(cache);
        result
    }

    fn backward_cached(&mut self, cache: &SeqCache, grad_out: &Tensor) -> Result<Tensor> {
        let (batch, h, d) = (cache.batch, self.hidden, self.in_dim);
        let k = h + d;
        let steps = cache.steps.len();
        if grad_out.shape() != [batch, h] {
            return Err(Error::shape("lstm grad_out", &[batch, h], grad_out.shape()));
        }
        let mut dh = grad_out.data().to_vec();
        let mut dc = vec![0.0; batch * h];
        let mut dxs = vec![0.0; batch * steps * d];

        for (t, sc) in cache.steps.iter().enumerate().rev() {
            let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; batch * h]);
            for n in 0..batch * h {
                let (f, i, o, g) = (
                    sc.gates[F][n],
                    sc.gates[I][n],
                    sc.gates[O][n],
                    sc.gates[C][n],
                );
                let tc = sc.tanh_cell[n];
                let d_o = dh[n] * tc;
                let dcn = dc[n] + dh[n] * o * (1.0 - tc * tc);
                da[F][n] = dcn * sc.cell_prev[n] * f * (1.0 - f);
                da[I][n] = dcn * g * i * (1.0 - i);
                da[O][n] = d_o * o * (1.0 - o);
                da[C][n] = dcn * i * (1.0 - g * g);
                dc[n] = dcn * f;
            }

            let mut dconcat = vec![0.0; batch * k];
            for (g, dag) in da.iter().enumerate() {
                par_matmul_tn_acc(
                    dag,
                    &sc.concat,
                    self.params.grad_mut(Self::weight_slot(g)).data_mut(),
                    batch,
                    h,
                    k,
                );
                let db = self.params.grad_mut(Self::bias_slot(g)).data_mut();
                for r in dag.chunks(h) {
                    for (acc, v) in db.iter_mut().zip(r) {
                        *acc += v;
                    }
                }
                par_matmul_acc(
                    dag,
                    self.params.value(Self::weight_slot(g)).data(),
                    &mut dconcat,
                    batch,
                    h,
                    k,
                );
            }
            for b in 0..batch {
                let row = &dconcat[b * k..(b + 1) * k];
                dh[b * h..(b + 1) * h].copy_from_slice(&row[..h]);
                let base = (b * steps + t) * d;
                dxs[base..base + d].copy_from_slice(&row[h..]);
            }
        }
        Tensor::new(vec![batch, steps, d], dxs)
    }
}
