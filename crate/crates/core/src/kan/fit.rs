//! Full-batch least-squares fitting of a single spline edge to a 1-D curve.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::KanLinear;
use crate::error::{Error, Result};
use crate::spline::SplineGrid;
use crate::tensor::Tensor;
use crate::train::{AdamW, AdamWConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub grid_size: usize,
    pub degree: usize,
    pub domain: (f64, f64),
    /// Evenly spaced sample points across the domain, endpoints included.
    pub points: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grid_size: 5,
            degree: 3,
            domain: (-1.0, 1.0),
            points: 200,
            steps: 3000,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// Trains a 1→1 [`KanLinear`] on `target` with MSE and AdamW (no decay).
/// Returns the fitted layer and its final mean squared error.
pub fn fit_curve(target: impl Fn(f64) -> f64, cfg: &FitConfig) -> Result<(KanLinear, f64)> {
    if cfg.points < 2 {
        return Err(Error::InvalidSize("fit needs at least two points".into()));
    }
    let grid = SplineGrid::new(cfg.domain.0, cfg.domain.1, cfg.grid_size, cfg.degree)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layer = KanLinear::new(1, 1, grid, &mut rng);
    let (lo, hi) = cfg.domain;
    let xs: Vec<f64> = (0..cfg.points)
        .map(|i| lo + (hi - lo) * i as f64 / (cfg.points - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| target(x)).collect();
    let x = Tensor::new(vec![cfg.points, 1], xs)?;
    let n = cfg.points as f64;
    let mut opt = AdamW::new(AdamWConfig {
        learning_rate: cfg.learning_rate,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.0,
    });

    let mse = |pred: &Tensor| {
        pred.data()
            .iter()
            .zip(&ys)
            .map(|(p, y)| (p - y).powi(2))
            .sum::<f64>()
            / n
    };
    for _ in 0..cfg.steps {
        let pred = layer.forward(&x)?;
        let grad: Vec<f64> = pred
            .data()
            .iter()
            .zip(&ys)
            .map(|(p, y)| 2.0 * (p - y) / n)
            .collect();
        layer.backward(&Tensor::new(vec![cfg.points, 1], grad)?)?;
        opt.step(layer.params_mut().iter_mut())?;
    }
    let loss = mse(&layer.forward(&x)?);
    Ok((layer, loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target() {
        let (_, loss) = fit_curve(|_| 0.3, &FitConfig::default()).unwrap();
        assert!(loss < 1e-4, "{loss}");
    }

    #[test]
    fn identity_target() {
        let (_, loss) = fit_curve(|x| x, &FitConfig::default()).unwrap();
        assert!(loss < 1e-4, "{loss}");
    }

    #[test]
    fn too_few_points() {
        let cfg = FitConfig {
            points: 1,
            ..Default::default()
        };
        assert!(fit_curve(|x| x, &cfg).is_err());
    }
}
