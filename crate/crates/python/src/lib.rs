//! Python bindings.
//!
//! Errors surface as `speedsynth.SpeedsynthError` (a `ValueError`) whose
//! `code` attribute carries the stable error code.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use speedsynth::engine::{simulate_hitting, simulate_terminal, Engine, SimConfig};
use speedsynth::io::{model_from_text, model_to_text};
use speedsynth::synthesis::Side;
use speedsynth::verify::{consistency_report, VerifyConfig};

create_exception!(speedsynth, SpeedsynthError, PyValueError);

fn to_py(e: speedsynth::Error) -> PyErr {
    let err = SpeedsynthError::new_err(format!("{}: {e}", e.code()));
    Python::attach(|py| {
        let _ = err.value(py).setattr("code", e.code());
    });
    err
}

fn engine(name: &str) -> PyResult<Engine> {
    name.parse::<Engine>().map_err(to_py)
}

/// Target law of `X_T`.
#[pyclass(name = "TargetMeasure", module = "speedsynth", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTarget(speedsynth::TargetMeasure);

#[pymethods]
impl PyTarget {
    #[staticmethod]
    fn uniform(lo: f64, hi: f64) -> PyResult<Self> {
        speedsynth::TargetMeasure::uniform(lo, hi).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn laplace(rate: f64) -> PyResult<Self> {
        speedsynth::TargetMeasure::laplace(rate).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn gaussian(mean: f64, sd: f64) -> PyResult<Self> {
        speedsynth::TargetMeasure::gaussian(mean, sd).map(Self).map_err(to_py)
    }

    /// Built-in family by name, e.g. `builtin("uniform", [-1, 1])`.
    #[staticmethod]
    fn builtin(kind: &str, params: Vec<f64>) -> PyResult<Self> {
        speedsynth::TargetMeasure::builtin(kind, &params).map(Self).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (values, weights=None))]
    fn from_samples(values: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        speedsynth::TargetMeasure::from_samples(&values, weights.as_deref()).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_call_prices(strikes: Vec<f64>, prices: Vec<f64>) -> PyResult<Self> {
        speedsynth::TargetMeasure::from_call_prices(&strikes, &prices).map(Self).map_err(to_py)
    }

    fn support(&self) -> (f64, f64) {
        self.0.support()
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        self.0.atoms().iter().map(|a| (a.x, a.mass)).collect()
    }

    fn density(&self, x: f64) -> f64 {
        self.0.density(x)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.0.quantile(p).map_err(to_py)
    }

    fn mean(&self) -> PyResult<f64> {
        self.0.mean().map_err(to_py)
    }

    fn call(&self, k: f64) -> f64 {
        self.0.call(k)
    }

    fn put(&self, k: f64) -> f64 {
        self.0.put(k)
    }

    fn __repr__(&self) -> String {
        let (lo, hi) = self.0.support();
        match self.0.family() {
            Some(f) => format!("TargetMeasure({}{:?})", f.name(), f.params()),
            None => format!("TargetMeasure(custom on [{lo}, {hi}], {} atoms)", self.0.atoms().len()),
        }
    }
}

/// Diffusion in natural scale whose value at an independent `Exp(λ)` time
/// has the target law.
#[pyclass(name = "DiffusionModel", module = "speedsynth", frozen)]
struct PyModel(speedsynth::DiffusionModel);

#[pymethods]
impl PyModel {
    #[getter]
    fn x0(&self) -> f64 {
        self.0.x0()
    }

    #[getter(lambda_)]
    fn lambda(&self) -> f64 {
        self.0.lambda()
    }

    #[getter]
    fn wronskian(&self) -> f64 {
        self.0.wronskian()
    }

    #[getter]
    fn target(&self) -> PyTarget {
        PyTarget(self.0.target().clone())
    }

    fn support(&self) -> (f64, f64) {
        self.0.support()
    }

    fn speed_density(&self, x: f64) -> f64 {
        self.0.speed_density(x)
    }

    fn speed_atoms(&self) -> Vec<(f64, f64)> {
        self.0.speed_atoms().iter().map(|a| (a.x, a.mass)).collect()
    }

    fn sigma_sq(&self, x: f64) -> f64 {
        self.0.sigma_sq(x)
    }

    /// `E_x[exp(-λ H_y)]`.
    fn hitting_laplace(&self, x: f64, y: f64) -> PyResult<f64> {
        self.0.hitting_laplace(x, y).map_err(to_py)
    }

    fn martingale_class(&self) -> &'static str {
        self.0.martingale_class().as_str()
    }

    fn boundaries(&self) -> (&'static str, &'static str) {
        (self.0.boundary(Side::Left).as_str(), self.0.boundary(Side::Right).as_str())
    }

    fn to_text(&self) -> PyResult<String> {
        model_to_text(&self.0).map_err(to_py)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        model_from_text(text).map(Self).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("DiffusionModel(x0={}, lambda_={}, wronskian={})", self.0.x0(), self.0.lambda(), self.0.wronskian())
    }
}

#[pyfunction]
fn wronskian_sup(target: &PyTarget, x0: f64) -> PyResult<f64> {
    speedsynth::wronskian_sup(&target.0, x0).map_err(to_py)
}

/// Builds the model; `w=None` uses the largest admissible Wronskian.
#[pyfunction]
#[pyo3(signature = (target, x0, lambda_, w=None))]
fn synthesize(target: &PyTarget, x0: f64, lambda_: f64, w: Option<f64>) -> PyResult<PyModel> {
    let w = match w {
        Some(w) => w,
        None => speedsynth::wronskian_sup(&target.0, x0).map_err(to_py)?,
    };
    speedsynth::synthesize(&target.0, x0, lambda_, w).map(PyModel).map_err(to_py)
}

fn sim_config(engine_name: &str, n: usize, dt: f64, seed: u64, sites: usize, truncation: f64) -> PyResult<SimConfig> {
    Ok(SimConfig {
        dt,
        n_sites: sites,
        truncation_quantile: truncation,
        ..SimConfig::new(engine(engine_name)?, n, seed)
    })
}

/// Draws of `X_T`; returns `(values, truncation_hits)`.
#[pyfunction]
#[pyo3(signature = (model, engine="sde", n=10_000, dt=1e-3, seed=0, sites=400, truncation=1e-6))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    model: &PyModel,
    engine: &str,
    n: usize,
    dt: f64,
    seed: u64,
    sites: usize,
    truncation: f64,
) -> PyResult<(Vec<f64>, u64)> {
    let cfg = sim_config(engine, n, dt, seed, sites, truncation)?;
    let sample = py.detach(|| simulate_terminal(&model.0, &cfg)).map_err(to_py)?;
    Ok((sample.values, sample.truncation_hits))
}

/// Monte Carlo estimate of `E_start[exp(-λ H_level)]` as `(mean, stderr)`.
#[pyfunction]
#[pyo3(signature = (model, start, level, engine="sde", n=10_000, dt=1e-3, seed=0, sites=400))]
#[allow(clippy::too_many_arguments)]
fn hitting(
    py: Python<'_>,
    model: &PyModel,
    start: f64,
    level: f64,
    engine: &str,
    n: usize,
    dt: f64,
    seed: u64,
    sites: usize,
) -> PyResult<(f64, f64)> {
    let cfg = sim_config(engine, n, dt, seed, sites, 1e-6)?;
    py.detach(|| simulate_hitting(&model.0, start, level, &cfg)).map_err(to_py)
}

/// Runs every consistency check and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (model, engines=None, n=10_000, dt=1e-3, seed=0, sites=400))]
fn verify<'py>(
    py: Python<'py>,
    model: &PyModel,
    engines: Option<Vec<String>>,
    n: usize,
    dt: f64,
    seed: u64,
    sites: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let list = match engines {
        Some(names) => names.iter().map(|e| engine(e)).collect::<PyResult<Vec<_>>>()?,
        None if model.0.speed_atoms().is_empty() => vec![Engine::Sde],
        None => vec![Engine::Ctmc],
    };
    let cfg = VerifyConfig::new(sim_config(list[0].as_str(), n, dt, seed, sites, 1e-6)?, list);
    let report = py.detach(|| consistency_report(&model.0, &cfg)).map_err(to_py)?;
    let json = py.import("json")?;
    json.call_method1("loads", (report.to_json(),))
}

/// Curves for `fig1` or `fig2` as a dict of column name to list.
#[pyfunction]
fn figure_data<'py>(py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyDict>> {
    let f = speedsynth::figures::figure_data(id).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("x", &f.x)?;
    for (h, c) in f.headers.iter().zip(&f.columns) {
        out.set_item(h, c)?;
    }
    Ok(out)
}

#[pymodule(name = "speedsynth")]
fn speedsynth_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SpeedsynthError", m.py().get_type::<SpeedsynthError>())?;
    m.add_class::<PyTarget>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(wronskian_sup, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(hitting, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(figure_data, m)?)?;
    Ok(())
}
