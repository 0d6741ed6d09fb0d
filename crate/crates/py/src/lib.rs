//! Python bindings for the core library.

use std::collections::BTreeMap;
use std::path::PathBuf;

use kanids::eval::Confusion;
use kanids::experiment::{prepare_dataset, run_grid, ExperimentConfig};
use kanids::gradcheck::{run_suite, SuiteOptions};
use kanids::train::{evaluate as eval_model, TrainConfig, Trainer as CoreTrainer};
use kanids::{build, Error, ModelKind, ModelSpec, Tensor};
use pyo3::exceptions::{PyArithmeticError, PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingFile(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Error::Divergence { .. } | Error::NonFiniteLogit(_) | Error::NonFiniteGradient(_) => {
            PyArithmeticError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).map_err(py_err)
}

fn metric_dict(c: &Confusion) -> PyResult<BTreeMap<&'static str, f64>> {
    let m = c.metrics().map_err(py_err)?;
    Ok(BTreeMap::from([
        ("tp", c.tp as f64),
        ("tn", c.tn as f64),
        ("fp", c.fp as f64),
        ("fn", c.fn_ as f64),
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
    ]))
}

/// Uniform B-spline knot grid.
#[pyclass(name = "SplineGrid", frozen)]
struct PySplineGrid(kanids::SplineGrid);

#[pymethods]
impl PySplineGrid {
    #[new]
    #[pyo3(signature = (grid_size, degree, lo = -1.0, hi = 1.0))]
    fn new(grid_size: usize, degree: usize, lo: f64, hi: f64) -> PyResult<Self> {
        kanids::make_grid(lo, hi, grid_size, degree)
            .map(Self)
            .map_err(py_err)
    }

    /// All basis values at `x`.
    fn basis(&self, x: f64) -> PyResult<Vec<f64>> {
        Ok(self.0.eval_basis(x).map_err(py_err)?.values)
    }

    /// All basis derivatives at `x`.
    fn derivatives(&self, x: f64) -> PyResult<Vec<f64>> {
        Ok(self.0.eval_basis(x).map_err(py_err)?.derivs)
    }

    #[getter]
    fn knots(&self) -> Vec<f64> {
        self.0.knots().to_vec()
    }

    #[getter]
    fn basis_count(&self) -> usize {
        self.0.basis_count()
    }
}

/// One of the benchmark architectures.
#[pyclass(name = "Model")]
struct PyModel(kanids::Model);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (kind, input_dim, seed = 0, hidden_width = None))]
    fn new(kind: &str, input_dim: usize, seed: u64, hidden_width: Option<usize>) -> PyResult<Self> {
        let kind: ModelKind = kind.parse().map_err(py_err)?;
        let mut spec = ModelSpec::new(kind, input_dim, seed);
        if let Some(h) = hidden_width {
            spec.hidden_width = h;
        }
        build(&spec).map(Self).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().name()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    fn layer_names(&self) -> Vec<&'static str> {
        self.0.layers().iter().map(|l| l.name()).collect()
    }

    /// Logits, one per input row.
    fn forward(&mut self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        Ok(self
            .0
            .forward(&to_tensor(rows)?)
            .map_err(py_err)?
            .into_data())
    }

    #[pyo3(signature = (rows, threshold = 0.5))]
    fn predict(&mut self, rows: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<u8>> {
        self.0.predict(&to_tensor(rows)?, threshold).map_err(py_err)
    }

    /// Confusion counts and metrics on labelled rows.
    #[pyo3(signature = (rows, labels, batch_size = 256))]
    fn evaluate(
        &mut self,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
        batch_size: usize,
    ) -> PyResult<BTreeMap<&'static str, f64>> {
        let c = eval_model(&mut self.0, &to_tensor(rows)?, &labels, batch_size).map_err(py_err)?;
        metric_dict(&c)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let mut buf = Vec::new();
        self.0.save_params(&mut buf).map_err(py_err)?;
        std::fs::write(path, buf).map_err(|e| py_err(e.into()))
    }

    /// Rebuilds a model from a file written by `save`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let bytes = std::fs::read(&path).map_err(|e| py_err(e.into()))?;
        kanids::Model::load_params(&bytes[..])
            .map(Self)
            .map_err(py_err)
    }
}

/// Mini-batch AdamW trainer with seeded shuffling.
#[pyclass(name = "Trainer")]
struct PyTrainer(CoreTrainer);

#[pymethods]
impl PyTrainer {
    #[new]
    #[pyo3(signature = (learning_rate = 2e-5, batch_size = 256, weight_decay = 0.01, seed = 0))]
    fn new(learning_rate: f64, batch_size: usize, weight_decay: f64, seed: u64) -> PyResult<Self> {
        let cfg = TrainConfig {
            learning_rate,
            batch_size,
            weight_decay,
            seed,
            ..TrainConfig::default()
        };
        CoreTrainer::new(cfg).map(Self).map_err(py_err)
    }

    /// One pass over the data; returns the mean training loss.
    fn run_epoch(
        &mut self,
        model: &mut PyModel,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> PyResult<f64> {
        self.0
            .run_epoch(&mut model.0, &to_tensor(rows)?, &labels)
            .map_err(py_err)
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.0.epoch()
    }
}

/// Binary confusion counts and metrics, attack (1) as the positive class.
#[pyfunction]
fn metrics(predicted: Vec<u8>, actual: Vec<u8>) -> PyResult<BTreeMap<&'static str, f64>> {
    metric_dict(&Confusion::from_predictions(&predicted, &actual).map_err(py_err)?)
}

/// Mean binary cross-entropy of probabilities.
#[pyfunction]
#[pyo3(signature = (probs, labels, clamp = 1e-7))]
fn bce_loss(probs: Vec<f64>, labels: Vec<u8>, clamp: f64) -> PyResult<f64> {
    kanids::train::loss::bce_loss(&probs, &labels, clamp).map_err(py_err)
}

/// Runs the finite-difference suite; one `(name, max_rel_error, passed)` per case.
#[pyfunction]
#[pyo3(signature = (seeds = 20, models = false))]
fn gradcheck(py: Python<'_>, seeds: u64, models: bool) -> PyResult<Vec<(String, f64, bool)>> {
    let opts = SuiteOptions {
        seeds,
        inject_fault: None,
        models,
    };
    let results = py.detach(|| run_suite(&opts)).map_err(py_err)?;
    Ok(results
        .into_iter()
        .map(|r| (r.name, r.max_rel_error, r.passed))
        .collect())
}

/// Prepares data and trains every model of a TOML experiment config.
/// Returns the process exit code the command-line tool would use.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_path: PathBuf) -> PyResult<i32> {
    py.detach(|| {
        let cfg = ExperimentConfig::load(&config_path)?;
        let data = prepare_dataset(&cfg.dataset)?.prepared;
        Ok(run_grid(&cfg, &data, &|_| {})?.exit_code())
    })
    .map_err(py_err)
}

#[pymodule]
fn pykanids(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySplineGrid>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrainer>()?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(bce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add(
        "MODEL_KINDS",
        ModelKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
