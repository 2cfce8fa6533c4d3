//! Python bindings for `gmmlab`.
//!
//! Vectors cross the boundary as lists (`X` as a list of rows). Structured
//! results (risk reports, condition reports, sweep results) come back as the
//! same dicts the CLI prints as JSON, and configs may be passed as dicts or
//! JSON strings.

use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use gmmlab::estimators::{self, SvmOptions, SvmSolution};
use gmmlab::experiments::{self, FigureOverrides, SweepConfig};
use gmmlab::io::{read_dataset, write_dataset_json};
use gmmlab::model::{preset_model, FigureId, PresetParams};
use gmmlab::quadforms;
use gmmlab::{regimes, risk, verify, Constants, GmmError, GmmModel, LabelMode};

fn err(e: GmmError) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(format!("{}: {e}", e.kind()))
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accept a JSON string or any `json.dumps`-able object.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(|e| err(e.into()))
}

fn labels(mode: &str) -> PyResult<LabelMode> {
    mode.parse().map_err(err)
}

fn constants(map: Option<HashMap<String, f64>>) -> Constants {
    map.unwrap_or_default().iter().fold(Constants::new(), |c, (k, v)| c.with(k, *v))
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: GmmModel,
    preset_n: Option<usize>,
}

#[pymethods]
impl PyModel {
    /// Diagonal covariance `diag(spectrum)` with mean `beta`.
    #[new]
    #[pyo3(signature = (beta, spectrum, flip_prob = 0.0, prior_plus = 0.5))]
    fn new(beta: Vec<f64>, spectrum: Vec<f64>, flip_prob: f64, prior_plus: f64) -> PyResult<Self> {
        let m = GmmModel::diagonal(beta, spectrum)
            .and_then(|m| m.with_flip_prob(flip_prob))
            .and_then(|m| m.with_prior_plus(prior_plus))
            .map_err(err)?;
        Ok(PyModel { inner: m, preset_n: None })
    }

    #[staticmethod]
    #[pyo3(signature = (eta, flip_prob = 0.0))]
    fn isotropic(eta: Vec<f64>, flip_prob: f64) -> PyResult<Self> {
        let m = GmmModel::isotropic(eta).and_then(|m| m.with_flip_prob(flip_prob)).map_err(err)?;
        Ok(PyModel { inner: m, preset_n: None })
    }

    /// A figure's default model; `params` overrides `n`, `p`, `eta`, `alpha`, `placement`.
    #[staticmethod]
    #[pyo3(signature = (figure, params = None))]
    fn preset(figure: &str, params: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let id: FigureId = figure.parse().map_err(err)?;
        let params: PresetParams = params.map(from_py).transpose()?.unwrap_or_default();
        let p = preset_model(id, params).map_err(err)?;
        Ok(PyModel { inner: p.model, preset_n: Some(p.n) })
    }

    #[staticmethod]
    fn from_json(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(PyModel { inner: from_py(obj)?, preset_n: None })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| err(e.into()))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Training size of the preset this model came from, if any.
    #[getter]
    fn preset_n(&self) -> Option<usize> {
        self.preset_n
    }

    #[getter]
    fn eta(&self) -> Vec<f64> {
        self.inner.eta().iter().copied().collect()
    }

    #[getter]
    fn spectrum(&self) -> Vec<f64> {
        self.inner.spectrum().values().to_vec()
    }

    #[getter]
    fn flip_prob(&self) -> f64 {
        self.inner.flip_prob()
    }

    #[getter]
    fn eta_norm(&self) -> f64 {
        self.inner.eta_norm()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn snr(&self) -> PyResult<f64> {
        self.inner.snr().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(p={}, |eta|={:.4}, flip_prob={})",
            self.inner.dim(),
            self.inner.eta_norm(),
            self.inner.flip_prob()
        )
    }
}

#[pyclass(name = "Dataset", frozen)]
struct PyDataset(gmmlab::Dataset);

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (x, y, y_c = None, seed = 0))]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>, y_c: Option<Vec<f64>>, seed: u64) -> PyResult<Self> {
        let n = x.len();
        let p = x.first().map_or(0, Vec::len);
        if x.iter().any(|r| r.len() != p) {
            return Err(PyValueError::new_err("rows of X have different lengths"));
        }
        let flat: Vec<f64> = x.into_iter().flatten().collect();
        let y_c = y_c.unwrap_or_else(|| y.clone());
        let ds = gmmlab::Dataset::new(DMatrix::from_row_slice(n, p, &flat), DVector::from_vec(y), DVector::from_vec(y_c), seed)
            .map_err(err)?;
        Ok(PyDataset(ds))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        read_dataset(&path).map(PyDataset).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_dataset_json(&self.0, &path).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.0.x().row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.0.y().iter().copied().collect()
    }

    #[getter]
    fn y_c(&self) -> Vec<f64> {
        self.0.y_c().iter().copied().collect()
    }

    /// Indices whose observed label was flipped.
    #[getter]
    fn flipped(&self) -> Vec<usize> {
        self.0.flipped()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, p={}, seed={})", self.0.n(), self.0.p(), self.0.seed())
    }
}

#[pyclass(name = "Classifier", frozen)]
struct PyClassifier {
    inner: estimators::Classifier,
    svm: Option<SvmSolution>,
}

impl PyClassifier {
    fn plain(inner: estimators::Classifier) -> Self {
        PyClassifier { inner, svm: None }
    }
}

#[pymethods]
impl PyClassifier {
    #[new]
    fn new(w: Vec<f64>) -> PyResult<Self> {
        estimators::Classifier::from_weights(DVector::from_vec(w)).map(PyClassifier::plain).map_err(err)
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w.iter().copied().collect()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn support_set(&self) -> Option<Vec<usize>> {
        self.svm.as_ref().map(|s| s.support_set.clone())
    }

    #[getter]
    fn alpha(&self) -> Option<Vec<f64>> {
        self.svm.as_ref().map(|s| s.alpha.clone())
    }

    #[getter]
    fn duality_gap(&self) -> Option<f64> {
        self.svm.as_ref().map(SvmSolution::duality_gap)
    }

    #[getter]
    fn sv_fraction(&self) -> Option<f64> {
        self.svm.as_ref().map(estimators::support_vector_fraction)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| err(e.into()))
    }

    fn __repr__(&self) -> String {
        format!("Classifier(kind={}, p={})", self.inner.kind.name(), self.inner.w.len())
    }
}

#[pyfunction]
#[pyo3(signature = (model, n, seed = 0))]
fn sample(model: &PyModel, n: usize, seed: u64) -> PyResult<PyDataset> {
    gmmlab::sample_dataset(&model.inner, n, seed).map(PyDataset).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (data, labels = "corrupted"))]
fn min_norm_ls(data: &PyDataset, labels: &str) -> PyResult<PyClassifier> {
    estimators::min_norm_ls(&data.0, self::labels(labels)?).map(PyClassifier::plain).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (data, tau, labels = "corrupted"))]
fn ridge(data: &PyDataset, tau: f64, labels: &str) -> PyResult<PyClassifier> {
    estimators::ridge(&data.0, tau, self::labels(labels)?).map(PyClassifier::plain).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (data, labels = "corrupted"))]
fn averaging(data: &PyDataset, labels: &str) -> PyResult<PyClassifier> {
    estimators::averaging(&data.0, self::labels(labels)?).map(PyClassifier::plain).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (data, labels = "corrupted"))]
fn hard_margin_svm(data: &PyDataset, labels: &str) -> PyResult<PyClassifier> {
    let s = estimators::hard_margin_svm(&data.0, self::labels(labels)?, SvmOptions::default()).map_err(err)?;
    Ok(PyClassifier { inner: s.classifier.clone(), svm: Some(s) })
}

/// Dual certificate `(yᵀ(XXᵀ)⁻¹)ᵢ yᵢ`; all positive means SVM equals LS.
#[pyfunction]
#[pyo3(signature = (data, labels = "corrupted"))]
fn duality_certificate(data: &PyDataset, labels: &str) -> PyResult<Vec<f64>> {
    let c = quadforms::duality_certificate(&data.0, self::labels(labels)?).map_err(err)?;
    Ok(c.iter().copied().collect())
}

/// Closed-form risk; uses the label-noise formula when the model flips labels.
#[pyfunction]
fn exact_risk<'py>(py: Python<'py>, classifier: &PyClassifier, model: &PyModel) -> PyResult<Bound<'py, PyAny>> {
    let w = &classifier.inner.w;
    let r = if model.inner.flip_prob() > 0.0 {
        risk::noisy_risk(w, &model.inner)
    } else {
        risk::exact_risk(w, &model.inner)
    };
    to_py(py, &r.map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (classifier, model, m, seed = 0))]
fn monte_carlo_risk<'py>(
    py: Python<'py>,
    classifier: &PyClassifier,
    model: &PyModel,
    m: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &risk::monte_carlo_risk(&classifier.inner.w, &model.inner, m, seed).map_err(err)?)
}

#[pyfunction]
fn q_function(x: f64) -> f64 {
    risk::q_function(x)
}

/// Clause-by-clause condition report for `theorem` (see `CHECK_IDS`).
#[pyfunction]
#[pyo3(signature = (theorem, model, n = None, constants = None, tau = 0.0, alpha = None))]
fn check<'py>(
    py: Python<'py>,
    theorem: &str,
    model: &PyModel,
    n: Option<usize>,
    constants: Option<HashMap<String, f64>>,
    tau: f64,
    alpha: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let n = n.or(model.preset_n).ok_or_else(|| PyValueError::new_err("n is required"))?;
    let report = regimes::check(theorem, &model.inner, n, &self::constants(constants), tau, alpha).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (config, threads = None))]
fn run_sweep<'py>(py: Python<'py>, config: &Bound<'py, PyAny>, threads: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg: SweepConfig = from_py(config)?;
    cfg.threads = threads.or(cfg.threads);
    let result = py.detach(|| experiments::run_sweep(&cfg)).map_err(err)?;
    to_py(py, &result)
}

/// Run a figure's sweep. Returns `{panel: {"columns", "rows"}}` and writes
/// the CSV panels when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (figure, overrides = None, out_dir = None))]
fn figure<'py>(
    py: Python<'py>,
    figure: &str,
    overrides: Option<&Bound<'py, PyAny>>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let id: FigureId = figure.parse().map_err(err)?;
    let o: FigureOverrides = overrides.map(from_py).transpose()?.unwrap_or_default();
    let out = py.detach(|| experiments::figure(id, &o)).map_err(err)?;
    if let Some(dir) = out_dir {
        out.write(&dir).map_err(err)?;
    }
    let panels: HashMap<&str, serde_json::Value> = out
        .panels
        .iter()
        .map(|p| (p.name.as_str(), serde_json::json!({"columns": p.columns, "rows": p.rows})))
        .collect();
    to_py(py, &panels)
}

/// Randomized property suites; returns one dict per suite.
#[pyfunction]
#[pyo3(signature = (seed = 0, quick = true))]
fn run_verify<'py>(py: Python<'py>, seed: u64, quick: bool) -> PyResult<Bound<'py, PyAny>> {
    let sizes = if quick { verify::SuiteSizes::quick() } else { verify::SuiteSizes::default() };
    let outcomes = py.detach(|| verify::run_all(sizes, seed));
    to_py(py, &outcomes)
}

#[pymodule]
fn pygmmlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(min_norm_ls, m)?)?;
    m.add_function(wrap_pyfunction!(ridge, m)?)?;
    m.add_function(wrap_pyfunction!(averaging, m)?)?;
    m.add_function(wrap_pyfunction!(hard_margin_svm, m)?)?;
    m.add_function(wrap_pyfunction!(duality_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(exact_risk, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_risk, m)?)?;
    m.add_function(wrap_pyfunction!(q_function, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(figure, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add("CHECK_IDS", regimes::CHECK_IDS.to_vec())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
