//! Python bindings. Build with `cargo build --release -p energymix-py
//! --features extension-module` and copy the shared library to
//! `energymix.so` (see `python/smoke_test.py`).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use energymix::datasets::{LabeledDataset, ToyExample};
use energymix::network::{Activation, NetworkSpec};
use energymix::rng::seeded_rng;
use energymix::scoring::{self, ScoreConfig, ScoreGradient};
use energymix::training::{self, TrainConfig};
use energymix::verify::{self, GradcheckOptions};
use energymix::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Divergence { .. } | Error::NonFinite(_) | Error::Verification(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Grad = (Vec<f64>, Vec<f64>, Vec<f64>);

fn grad_tuple(g: ScoreGradient) -> Grad {
    (g.d_weights, g.d_means, g.d_stds)
}

/// Gaussian mixture with weights, means and standard deviations.
#[pyclass(name = "MixtureParams", from_py_object)]
#[derive(Clone)]
struct PyMixture {
    inner: energymix::MixtureParams,
}

#[pymethods]
impl PyMixture {
    #[new]
    fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> PyResult<Self> {
        energymix::MixtureParams::new(weights, means, stds)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn means(&self) -> Vec<f64> {
        self.inner.means().to_vec()
    }

    #[getter]
    fn stds(&self) -> Vec<f64> {
        self.inner.stds().to_vec()
    }

    fn pdf(&self, y: f64) -> PyResult<f64> {
        self.inner.pdf(y).map_err(to_py)
    }

    fn log_pdf(&self, y: f64) -> PyResult<f64> {
        self.inner.log_pdf(y).map_err(to_py)
    }

    fn cdf(&self, y: f64) -> f64 {
        self.inner.cdf(y)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.inner.quantile(p).map_err(to_py)
    }

    fn central_interval(&self, level: f64) -> PyResult<(f64, f64)> {
        self.inner.central_interval(level).map_err(to_py)
    }

    /// `(mean, variance, std)`.
    fn moments(&self) -> (f64, f64, f64) {
        let m = self.inner.moments();
        (m.mean, m.variance, m.std)
    }

    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        self.inner.sample(&mut seeded_rng(seed), n)
    }

    fn __repr__(&self) -> String {
        format!(
            "MixtureParams(weights={:?}, means={:?}, stds={:?})",
            self.inner.weights(),
            self.inner.means(),
            self.inner.stds()
        )
    }
}

fn config(eta: f64) -> PyResult<ScoreConfig> {
    ScoreConfig::new(eta).map_err(to_py)
}

#[pyfunction]
fn log_score(p: &PyMixture, y: f64) -> f64 {
    scoring::log_score(&p.inner, y)
}

#[pyfunction]
fn energy_score(p: &PyMixture, y: f64) -> f64 {
    scoring::energy_score_analytic(&p.inner, y)
}

#[pyfunction]
fn hybrid_score(p: &PyMixture, y: f64, eta: f64) -> PyResult<f64> {
    Ok(scoring::hybrid_score(&p.inner, y, config(eta)?))
}

/// Gradients as `(d_weights, d_means, d_stds)`.
#[pyfunction]
fn log_score_grad(p: &PyMixture, y: f64) -> Grad {
    grad_tuple(scoring::log_score_grad(&p.inner, y))
}

#[pyfunction]
fn energy_score_grad(p: &PyMixture, y: f64) -> Grad {
    grad_tuple(scoring::energy_score_grad(&p.inner, y))
}

#[pyfunction]
fn hybrid_score_grad(p: &PyMixture, y: f64, eta: f64) -> PyResult<Grad> {
    Ok(grad_tuple(scoring::hybrid_score_grad(&p.inner, y, config(eta)?)))
}

/// Monte Carlo energy score: `(estimate, standard_error)`.
#[pyfunction]
#[pyo3(signature = (p, y, draws, seed = 0))]
fn energy_score_monte_carlo(p: &PyMixture, y: f64, draws: usize, seed: u64) -> PyResult<(f64, f64)> {
    let mc = scoring::energy_score_monte_carlo(&p.inner, y, draws, &mut seeded_rng(seed)).map_err(to_py)?;
    Ok((mc.estimate, mc.std_error))
}

/// Toy data as a dict of `train`/`val`/`test` entries, each with `x`, `y`,
/// `m_true` and `s_true` lists.
#[pyfunction]
#[pyo3(signature = (example, n, seed = 0))]
fn generate<'py>(py: Python<'py>, example: &str, n: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let ex: ToyExample = example.parse().map_err(to_py)?;
    let data = ex.generate(n, seed).map_err(to_py)?;
    let split = data.split().map_err(to_py)?.clone();
    let truth = data.ground_truth.as_ref().expect("toy data has ground truth");
    let out = PyDict::new(py);
    for (name, rows) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let part = PyDict::new(py);
        part.set_item("x", rows.iter().map(|&i| data.features[i][0]).collect::<Vec<_>>())?;
        part.set_item("y", rows.iter().map(|&i| data.targets[i]).collect::<Vec<_>>())?;
        part.set_item("m_true", rows.iter().map(|&i| truth.mean[i]).collect::<Vec<_>>())?;
        part.set_item("s_true", rows.iter().map(|&i| truth.std[i]).collect::<Vec<_>>())?;
        out.set_item(name, part)?;
    }
    Ok(out)
}

/// A trained network with its standardization.
#[pyclass(name = "Model")]
struct PyModel {
    inner: energymix::TrainedModel,
    #[pyo3(get)]
    best_epoch: usize,
    #[pyo3(get)]
    val_loss_curve: Vec<f64>,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    /// Predictive mixtures in the original target scale.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<PyMixture>> {
        let ps = self.inner.predict_batch(&x).map_err(to_py)?;
        Ok(ps.into_iter().map(|inner| PyMixture { inner }).collect())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = energymix::TrainedModel::load(&path).map_err(to_py)?;
        Ok(Self {
            inner,
            best_epoch: 0,
            val_loss_curve: Vec::new(),
        })
    }
}

fn dataset(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<LabeledDataset> {
    LabeledDataset::new(x, y).map_err(to_py)
}

/// Trains on explicit train/validation arrays (rows of features).
#[pyfunction]
#[pyo3(signature = (
    x_train, y_train, x_val, y_val, k = 1, eta = 0.5, learning_rate = 0.005,
    epochs = 2000, batch_size = 32, patience = 50, hidden = vec![50], activation = "tanh", seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    x_val: Vec<Vec<f64>>,
    y_val: Vec<f64>,
    k: usize,
    eta: f64,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    patience: usize,
    hidden: Vec<usize>,
    activation: &str,
    seed: u64,
) -> PyResult<PyModel> {
    let mut data =
        LabeledDataset::from_partitions(dataset(x_train, y_train)?, dataset(x_val, y_val)?, None).map_err(to_py)?;
    data.standardize().map_err(to_py)?;
    let activation: Activation = activation.parse().map_err(to_py)?;
    let spec = NetworkSpec {
        hidden_layers: hidden,
        activation,
        seed,
        ..NetworkSpec::new(data.dim(), k)
    };
    let cfg = TrainConfig {
        eta,
        learning_rate,
        epochs_max: epochs,
        batch_size,
        patience,
        seed,
        ..TrainConfig::default()
    };
    let report = py
        .detach(|| training::train(&spec, &data, &cfg))
        .map_err(to_py)?;
    Ok(PyModel {
        best_epoch: report.best_epoch,
        val_loss_curve: report.val_loss_curve,
        inner: report.model,
    })
}

type ReportRow = (String, String, f64, f64, bool);

/// Runs the verification suites; returns a list of
/// `(suite, check, max_error, tolerance, passed)` rows.
#[pyfunction]
#[pyo3(signature = (cases = 20, seed = 0, mc_draws = 50_000, properness_draws = 20_000))]
fn gradcheck(
    py: Python<'_>,
    cases: usize,
    seed: u64,
    mc_draws: usize,
    properness_draws: usize,
) -> PyResult<Vec<ReportRow>> {
    let opts = GradcheckOptions {
        seed,
        cases,
        mc_draws,
        properness_draws,
        ..GradcheckOptions::default()
    };
    let report = py.detach(|| verify::run_gradcheck(&opts)).map_err(to_py)?;
    Ok(report
        .rows
        .into_iter()
        .map(|r| (r.suite, r.check, r.max_error, r.tolerance, r.passed))
        .collect())
}

#[pymodule]
#[pyo3(name = "energymix")]
fn energymix_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixture>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(log_score, m)?)?;
    m.add_function(wrap_pyfunction!(energy_score, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_score, m)?)?;
    m.add_function(wrap_pyfunction!(log_score_grad, m)?)?;
    m.add_function(wrap_pyfunction!(energy_score_grad, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_score_grad, m)?)?;
    m.add_function(wrap_pyfunction!(energy_score_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
