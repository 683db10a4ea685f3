//! Python bindings for `robustlab`.
//!
//! Points and logits cross the boundary as lists of rows; labels as lists
//! of ints.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use robustlab::{
    Activation, AttackConfig, CheckpointMeta, DomainBox, Error, MlpConfig, MlpParams, Method,
    SweepConfig, Tensor, TrainConfig,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for robustlab::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parsed<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).py()
}

/// `(epoch, loss, nat_acc)`.
type EpochRow = (usize, f64, f64);

/// `(adversarial_points, kappa, still_correct)`.
type AttackOutput = (Vec<Vec<f64>>, Vec<usize>, Vec<bool>);

fn attack_config(name: &str, epsilon: f64, alpha: f64, seed: u64) -> PyResult<AttackConfig> {
    Ok(AttackConfig::preset(name, epsilon).py()?.with_alpha(alpha).with_seed(seed))
}

/// Labeled points inside an axis-aligned domain box.
#[pyclass(name = "Dataset", module = "pyrobustlab", frozen)]
pub struct PyDataset {
    inner: robustlab::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (points, labels, num_classes, lower=None, upper=None))]
    fn new(
        points: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let points = matrix(points)?;
        let domain = match (lower, upper) {
            (Some(l), Some(u)) => DomainBox::new(l, u).py()?,
            (None, None) => DomainBox::unit(points.cols()),
            _ => return Err(PyValueError::new_err("give both lower and upper or neither")),
        };
        let inner = robustlab::Dataset::new(points, labels, domain, num_classes, 0, "python").py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, noise=0.1, seed=0))]
    fn two_moons(n: usize, noise: f64, seed: u64) -> PyResult<Self> {
        let inner = robustlab::gen_two_moons(n, noise, seed).py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, inner_radius=0.5, outer_radius=1.0, noise=0.05, seed=0))]
    fn rings(n: usize, inner_radius: f64, outer_radius: f64, noise: f64, seed: u64) -> PyResult<Self> {
        let inner = robustlab::gen_rings(n, (inner_radius, outer_radius), noise, seed).py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, centers, sigma=0.1, seed=0))]
    fn blobs(n: usize, centers: Vec<Vec<f64>>, sigma: f64, seed: u64) -> PyResult<Self> {
        let inner = robustlab::gen_gaussian_blobs(n, &centers, sigma, seed).py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = robustlab::datasets::load_csv(&path).py()?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        robustlab::datasets::save_csv(&self.inner, &path).py()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points.to_rows()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(generator={:?}, n={}, dim={}, classes={})",
            self.inner.generator,
            self.inner.len(),
            self.inner.dim(),
            self.inner.num_classes
        )
    }
}

/// Fully connected classifier.
#[pyclass(name = "Model", module = "pyrobustlab", frozen)]
pub struct PyModel {
    params: MlpParams,
    meta: CheckpointMeta,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (layer_sizes, activation="relu", seed=0))]
    fn new(layer_sizes: Vec<usize>, activation: &str, seed: u64) -> PyResult<Self> {
        let cfg = MlpConfig::new(layer_sizes, parsed::<Activation>(activation)?, seed).py()?;
        let params = MlpParams::init(&cfg).py()?;
        Ok(Self {
            params,
            meta: CheckpointMeta {
                method: "init".into(),
                seed,
                epochs: 0,
            },
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = robustlab::load_checkpoint(&path).py()?;
        Ok(Self {
            params: ckpt.params,
            meta: ckpt.meta,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        robustlab::save_checkpoint(&self.params, &self.meta, &path).py()
    }

    fn logits(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.params.forward_logits(&matrix(points)?).py()?.to_rows())
    }

    fn predict(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        self.params.predict(&matrix(points)?).py()
    }

    /// Same network with its logits multiplied by `factor`.
    fn scaled(&self, factor: f64) -> PyResult<Self> {
        Ok(Self {
            params: self.params.with_scaled_logits(factor).py()?,
            meta: self.meta.clone(),
        })
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.params.config().layer_sizes.clone()
    }

    #[getter]
    fn method(&self) -> String {
        self.meta.method.clone()
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.meta.epochs
    }

    fn content_hash(&self) -> String {
        self.params.content_hash()
    }

    fn __repr__(&self) -> String {
        format!("Model(layer_sizes={:?}, method={:?})", self.params.config().layer_sizes, self.meta.method)
    }
}

/// Trains a model; returns it with one `(epoch, loss, nat_acc)` per epoch.
#[pyfunction]
#[pyo3(signature = (
    dataset, method="at", epochs=60, epsilon=0.031, seed=7, hidden=vec![32, 32],
    activation="relu", burn_in=None, omega_lambda=None, learning_rate=None, batch_size=None,
    inner_steps=None,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    dataset: &PyDataset,
    method: &str,
    epochs: usize,
    epsilon: f64,
    seed: u64,
    hidden: Vec<usize>,
    activation: &str,
    burn_in: Option<usize>,
    omega_lambda: Option<f64>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    inner_steps: Option<usize>,
) -> PyResult<(PyModel, Vec<EpochRow>)> {
    let method: Method = parsed(method)?;
    let ds = &dataset.inner;
    let mut sizes = vec![ds.dim()];
    sizes.extend(hidden);
    sizes.push(ds.num_classes);
    let model_cfg = MlpConfig::new(sizes, parsed(activation)?, seed).py()?;
    let mut cfg = TrainConfig::for_method(method, epochs, epsilon, seed);
    if let Some(b) = burn_in {
        cfg.burn_in_epochs = b;
    }
    if omega_lambda.is_some() && method == Method::Gairat {
        cfg.omega_lambda = omega_lambda;
    }
    if let Some(lr) = learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(b) = batch_size {
        cfg.batch_size = b;
    }
    if let (Some(k), Some(inner)) = (inner_steps, cfg.inner_attack.as_mut()) {
        inner.steps = k;
    }
    let (params, history) = py.detach(|| robustlab::train(&model_cfg, ds, &cfg)).py()?;
    let records = history.records.iter().map(|r| (r.epoch, r.loss, r.nat_acc)).collect();
    let meta = CheckpointMeta {
        method: method.to_string(),
        seed,
        epochs,
    };
    Ok((PyModel { params, meta }, records))
}

/// Runs a preset attack (`pgd20`, `pgdplus`, `pgd200`) on every point.
/// Returns `(adversarial_points, kappa, still_correct)`.
#[pyfunction]
#[pyo3(signature = (model, dataset, epsilon=0.031, attack="pgd20", alpha=1.0, seed=0))]
fn pgd_attack(
    py: Python<'_>,
    model: &PyModel,
    dataset: &PyDataset,
    epsilon: f64,
    attack: &str,
    alpha: f64,
    seed: u64,
) -> PyResult<AttackOutput> {
    let cfg = attack_config(attack, epsilon, alpha, seed)?;
    let ds = &dataset.inner;
    let r = py
        .detach(|| robustlab::pgd_attack(&model.params, &ds.points, &ds.labels, Some(&ds.domain), &cfg))
        .py()?;
    Ok((r.adversarial.to_rows(), r.kappa, r.final_correct))
}

#[pyfunction]
fn eval_natural(model: &PyModel, dataset: &PyDataset) -> PyResult<f64> {
    robustlab::eval_natural(&model.params, &dataset.inner).py()
}

#[pyfunction]
#[pyo3(signature = (model, dataset, epsilon=0.031, attack="pgd20", alpha=1.0, seed=0))]
fn eval_robust(
    py: Python<'_>,
    model: &PyModel,
    dataset: &PyDataset,
    epsilon: f64,
    attack: &str,
    alpha: f64,
    seed: u64,
) -> PyResult<f64> {
    let cfg = attack_config(attack, epsilon, alpha, seed)?;
    py.detach(|| robustlab::eval_robust(&model.params, &dataset.inner, &cfg, cfg.verdict)).py()
}

/// Robust accuracy across logit scales. Returns `(rows, worst_alpha)` where
/// each row is `(alpha, robust_accuracy)`.
#[pyfunction]
#[pyo3(signature = (model, dataset, epsilon=0.031, attack="pgd20", alpha_grid=None, seed=0))]
fn alpha_sweep(
    py: Python<'_>,
    model: &PyModel,
    dataset: &PyDataset,
    epsilon: f64,
    attack: &str,
    alpha_grid: Option<Vec<f64>>,
    seed: u64,
) -> PyResult<(Vec<(f64, f64)>, f64)> {
    let base = attack_config(attack, epsilon, 1.0, seed)?;
    let verdict = base.verdict;
    let grid = alpha_grid.unwrap_or_else(robustlab::default_alpha_grid);
    let sweep = SweepConfig::new(grid, base).py()?;
    let result = py
        .detach(|| robustlab::alpha_sweep(&model.params, &dataset.inner, attack, &sweep, verdict))
        .py()?;
    let rows = result.rows.iter().map(|r| (r.alpha, r.robust_accuracy)).collect();
    Ok((rows, result.worst_alpha))
}

/// Exhaustive grid check of one point; true iff no grid point is misclassified.
#[pyfunction]
#[pyo3(signature = (model, x, y, epsilon, grid=51))]
fn brute_force_attack(model: &PyModel, x: Vec<f64>, y: usize, epsilon: f64, grid: usize) -> PyResult<bool> {
    let domain = DomainBox::unit(x.len());
    robustlab::brute_force_attack(&model.params, &x, y, epsilon, Some(&domain), grid).py()
}

/// Per-example weights from attack step counts, normalized to mean 1.
#[pyfunction]
#[pyo3(signature = (kappa, steps, omega_lambda=0.0))]
fn compute_weights(kappa: Vec<usize>, steps: usize, omega_lambda: f64) -> PyResult<Vec<f64>> {
    Ok(robustlab::compute_weights(&kappa, steps, omega_lambda).py()?.weights().to_vec())
}

#[pyfunction]
#[pyo3(signature = (logits, alpha=1.0))]
fn softmax(logits: Vec<Vec<f64>>, alpha: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(robustlab::softmax(&matrix(logits)?, alpha).py()?.to_rows())
}

#[pyfunction]
#[pyo3(signature = (logits, labels, alpha=1.0))]
fn scaled_cross_entropy(logits: Vec<Vec<f64>>, labels: Vec<usize>, alpha: f64) -> PyResult<Vec<f64>> {
    robustlab::scaled_softmax_cross_entropy(&matrix(logits)?, &labels, alpha).py()
}

#[pyfunction]
fn default_alpha_grid() -> Vec<f64> {
    robustlab::default_alpha_grid()
}

#[pymodule]
fn pyrobustlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(pgd_attack, m)?)?;
    m.add_function(wrap_pyfunction!(eval_natural, m)?)?;
    m.add_function(wrap_pyfunction!(eval_robust, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_attack, m)?)?;
    m.add_function(wrap_pyfunction!(compute_weights, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(default_alpha_grid, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
