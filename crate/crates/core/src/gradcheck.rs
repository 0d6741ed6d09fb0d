//! Central finite-difference checks of every layer's hand-written backward pass.
//!
//! Each check draws a layer and an input from a seed, projects the output onto
//! a random direction `w` so the scalar objective is `Σ w ⊙ f(x)`, and compares
//! the analytic gradient (backward of `w`) against `(L(θ+h) − L(θ−h)) / 2h`
//! for every parameter entry and every input entry.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::kan::{ConvKan, KanLinear};
use crate::layers::{Activation, Conv2d, Dense, Lstm, MaxPool2d};
use crate::models::{build, Layer, ModelKind, ModelSpec};
use crate::spline::SplineGrid;
use crate::tensor::Tensor;
use crate::train::bce_with_logits;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const DEFAULT_SEEDS: u64 = 20;

/// Magnitude below which a gradient entry is compared absolutely.
///
/// A central difference of an O(1) objective carries roundoff near
/// `ε·|L| / h ≈ 1e-11`, so relative error is meaningless for entries of
/// order 1e-8 (e.g. coefficients under the tail of a cubic basis function).
/// Below the floor the tolerance is effectively `REL_TOL · GRAD_FLOOR = 1e-10` absolute.
pub const GRAD_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, GRAD_FLOOR)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Layer configurations exercised by [`run_suite`].
pub const LAYER_CASES: [&str; 9] = [
    "dense",
    "conv2d",
    "maxpool2d",
    "lstm",
    "kan_linear",
    "kan_linear_degree0",
    "kan_linear_degree1",
    "conv_kan",
    "conv_kan_padded",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub seeds: u64,
    /// Scalar gradient entries compared across all seeds.
    pub entries: usize,
    pub max_rel_error: f64,
    pub passed: bool,
    pub secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub seeds: u64,
    /// Corrupts the analytic gradient of the named case (test hook).
    pub inject_fault: Option<String>,
    /// Also check every architecture end to end at toy sizes.
    pub models: bool,
}

fn grid(g: usize, r: usize) -> SplineGrid {
    SplineGrid::new(-1.0, 1.0, g, r).expect("valid test grid")
}

/// Uniform input in `[-1, 1]`, kept at least `gap` away from every knot so
/// low-degree splines are differentiable across the `±h` stencil.
fn off_knot_input(shape: &[usize], knots: &[f64], gap: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = loop {
            let u: f64 = rng.random_range(-1.0..1.0);
            if knots.iter().all(|k| (u - k).abs() > gap) {
                break u;
            }
        };
    }
    t
}

/// Distinct values at least `2 / len` apart, so no pooling window holds a
/// near-tie that the `±h` stencil could flip.
fn separated_input(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
    vals.shuffle(rng);
    Tensor::new(shape.to_vec(), vals).expect("shape matches")
}

/// Builds the layer and input for one case and seed.
fn case(name: &str, rng: &mut ChaCha8Rng) -> (Layer, Tensor) {
    let relu = Activation::Relu;
    match name {
        "dense" => (
            Layer::Dense(Dense::new(4, 3, Activation::Tanh, rng)),
            Tensor::uniform(&[3, 4], 1.0, rng),
        ),
        "conv2d" => (
            Layer::Conv2d(Conv2d::new(2, 3, 3, 1, relu, rng)),
            Tensor::uniform(&[2, 2, 4, 5], 1.0, rng),
        ),
        "maxpool2d" => (
            Layer::MaxPool2d(MaxPool2d::new(2).expect("window")),
            separated_input(&[2, 2, 5, 5], rng),
        ),
        "lstm" => (
            Layer::Lstm(Lstm::new(3, 4, rng)),
            Tensor::uniform(&[2, 3, 3], 1.0, rng),
        ),
        "kan_linear" => {
            let g = grid(5, 3);
            (
                Layer::KanLinear(KanLinear::new(3, 2, g, rng)),
                Tensor::uniform(&[3, 3], 1.2, rng),
            )
        }
        "kan_linear_degree0" | "kan_linear_degree1" => {
            let r = usize::from(name.ends_with('1'));
            let g = grid(4, r);
            let knots = g.knots().to_vec();
            let layer = KanLinear::new(3, 2, g, rng);
            (
                Layer::KanLinear(layer),
                off_knot_input(&[3, 3], &knots, 1e-3, rng),
            )
        }
        "conv_kan" => {
            let g = grid(5, 3);
            (
                Layer::ConvKan(ConvKan::new(2, 2, 3, 0, g, rng)),
                Tensor::uniform(&[2, 2, 4, 4], 1.0, rng),
            )
        }
        "conv_kan_padded" => {
            // odd grid keeps the padded u = 0 taps off the knots
            let g = grid(3, 2);
            (
                Layer::ConvKan(ConvKan::new(1, 2, 3, 1, g, rng)),
                Tensor::uniform(&[2, 1, 3, 4], 1.0, rng),
            )
        }
        other => panic!("unknown gradcheck case {other}"),
    }
}

fn objective(layer: &mut Layer, x: &Tensor, w: &[f64]) -> Result<f64> {
    let y = layer.forward(x)?;
    Ok(y.data().iter().zip(w).map(|(a, b)| a * b).sum())
}

/// Max relative error over all parameter and input entries of one layer.
pub fn check_layer(
    layer: &mut Layer,
    x: &Tensor,
    rng: &mut ChaCha8Rng,
    fault: bool,
) -> Result<(f64, usize)> {
    let y = layer.forward(x)?;
    let w = Tensor::uniform(y.shape(), 1.0, rng);
    if let Some(p) = layer.params_mut() {
        p.zero_grads();
    }
    let dx = layer.backward(&w)?;
    let mut analytic: Vec<Vec<f64>> = layer
        .params()
        .map(|p| p.iter().map(|q| q.grad.data().to_vec()).collect())
        .unwrap_or_default();
    analytic.push(dx.data().to_vec());
    if fault {
        for g in analytic.iter_mut().flatten() {
            *g = *g * 1.01 + 1e-3;
        }
    }

    let mut worst = 0.0f64;
    let mut count = 0;
    let n_params = analytic.len() - 1;
    for (pi, grads) in analytic[..n_params].iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let nudge = |layer: &mut Layer, d: f64| {
                let p = layer.params_mut().expect("has params");
                let v = &mut p.iter_mut().nth(pi).expect("param").value.data_mut()[k];
                *v += d;
            };
            nudge(layer, FD_STEP);
            let lp = objective(layer, x, w.data())?;
            nudge(layer, -2.0 * FD_STEP);
            let lm = objective(layer, x, w.data())?;
            nudge(layer, FD_STEP);
            worst = worst.max(rel_error(a, (lp - lm) / (2.0 * FD_STEP)));
            count += 1;
        }
    }
    let mut xp = x.clone();
    for (k, &a) in analytic[n_params].iter().enumerate() {
        let orig = xp.data()[k];
        xp.data_mut()[k] = orig + FD_STEP;
        let lp = objective(layer, &xp, w.data())?;
        xp.data_mut()[k] = orig - FD_STEP;
        let lm = objective(layer, &xp, w.data())?;
        xp.data_mut()[k] = orig;
        worst = worst.max(rel_error(a, (lp - lm) / (2.0 * FD_STEP)));
        count += 1;
    }
    Ok((worst, count))
}

pub fn check_case(name: &str, seeds: u64, fault: bool) -> Result<CheckResult> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut entries = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut layer, x) = case(name, &mut rng);
        let (e, n) = check_layer(&mut layer, &x, &mut rng, fault)?;
        worst = worst.max(e);
        entries += n;
    }
    Ok(CheckResult {
        name: name.to_string(),
        seeds,
        entries,
        max_rel_error: worst,
        passed: worst <= REL_TOL,
        secs: start.elapsed().as_secs_f64(),
    })
}

/// Toy-sized spec used for end-to-end checks.
pub fn toy_spec(kind: ModelKind, seed: u64) -> ModelSpec {
    let mut spec = ModelSpec::new(kind, 8, seed);
    spec.hidden_width = 4;
    spec.conv_channels = [2, 2, 2];
    spec
}

/// End-to-end check of BCE loss with respect to every parameter of a toy model.
pub fn check_model(kind: ModelKind, seed: u64) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut model = build(&toy_spec(kind, seed))?;
    // Zero-initialised biases behind fully dead ReLU units put later
    // pre-activations exactly on the kink, where central differences are invalid.
    for p in model.params_mut().filter(|p| p.name == "bias") {
        for v in p.value.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let x = Tensor::uniform(&[3, 8], 1.0, &mut rng);
    let y: Vec<u8> = (0..3).map(|_| rng.random_range(0..2)).collect();
    let loss = |m: &mut crate::models::Model| -> Result<f64> {
        let z = m.forward(&x)?;
        Ok(bce_with_logits(z.data(), &y, 1e-12)?.0)
    };
    let z = model.forward(&x)?;
    let (_, g) = bce_with_logits(z.data(), &y, 1e-12)?;
    model.zero_grads();
    model.backward(&Tensor::new(vec![3, 1], g)?)?;
    let analytic: Vec<Vec<f64>> = model.params().map(|p| p.grad.data().to_vec()).collect();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let nudge = |m: &mut crate::models::Model, d: f64| {
                m.params_mut().nth(pi).expect("param").value.data_mut()[k] += d;
            };
            nudge(&mut model, FD_STEP);
            let lp = loss(&mut model)?;
            nudge(&mut model, -2.0 * FD_STEP);
            let lm = loss(&mut model)?;
            nudge(&mut model, FD_STEP);
            worst = worst.max(rel_error(a, (lp - lm) / (2.0 * FD_STEP)));
            count += 1;
        }
    }
    Ok((worst, count))
}

/// Runs every layer case (and optionally every architecture).
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<CheckResult>> {
    let seeds = if opts.seeds == 0 {
        DEFAULT_SEEDS
    } else {
        opts.seeds
    };
    let mut out = Vec::new();
    for name in LAYER_CASES {
        let fault = opts.inject_fault.as_deref() == Some(name);
        out.push(check_case(name, seeds, fault)?);
    }
    if opts.models {
        for kind in ModelKind::ALL {
            let start = Instant::now();
            let (mut worst, mut entries) = (0.0f64, 0);
            for seed in 0..seeds.min(3) {
                let (e, n) = check_model(kind, seed)?;
                worst = worst.max(e);
                entries += n;
            }
            out.push(CheckResult {
                name: format!("model:{}", kind.name()),
                seeds: seeds.min(3),
                entries,
                max_rel_error: worst,
                passed: worst <= REL_TOL,
                secs: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(out)
}

pub fn render(results: &[CheckResult]) -> String {
    let mut s = format!(
        "{:<22} {:>6} {:>8} {:>14} {:>8}\n",
        "layer", "seeds", "entries", "max_rel_err", "status"
    );
    for r in results {
        let _ = writeln!(
            s,
            "{:<22} {:>6} {:>8} {:>14.3e} {:>8}",
            r.name,
            r.seeds,
            r.entries,
            r.max_rel_error,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_error_floor() {
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert!((rel_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!(rel_error(1e-12, 0.0) < 1e-5);
        assert!(rel_error(1e-6, 1.2e-6) > REL_TOL);
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = check_case("dense", 2, true).unwrap();
        assert!(!r.passed);
        assert!(check_case("dense", 2, false).unwrap().passed);
    }
}
