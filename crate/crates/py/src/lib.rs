//! Python bindings. Structured results (reports, diagnostics, fits) are
//! returned as plain dictionaries; option bundles are accepted as dicts.

use std::fs::File;
use std::io::BufWriter;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use delaysync::diagnostics::{self, Tolerances};
use delaysync::hypotheses::{self, default_delta};
use delaysync::integrator::{self, IntegratorSettings};
use delaysync::model::{self, FrequencyDistribution};
use delaysync::sweep::{self, SweepSpec};
use delaysync::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn from_py_or_default<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    obj.map_or_else(|| Ok(T::default()), from_py)
}

#[pyclass(name = "OscillatorSystem", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySystem(model::OscillatorSystem);

#[pymethods]
impl PySystem {
    #[new]
    fn new(natural_frequencies: Vec<f64>, coupling: f64, delay: f64) -> PyResult<Self> {
        model::OscillatorSystem::new(natural_frequencies, coupling, delay)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn natural_frequencies(&self) -> Vec<f64> {
        self.0.natural_frequencies().to_vec()
    }

    #[getter]
    fn coupling(&self) -> f64 {
        self.0.coupling()
    }

    #[getter]
    fn delay(&self) -> f64 {
        self.0.delay()
    }

    fn __repr__(&self) -> String {
        format!(
            "OscillatorSystem(n={}, coupling={}, delay={})",
            self.0.n(),
            self.0.coupling(),
            self.0.delay()
        )
    }
}

#[pyclass(name = "InitialHistory", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHistory(model::InitialHistory);

#[pymethods]
impl PyHistory {
    #[staticmethod]
    fn constant(values: Vec<f64>) -> Self {
        Self(model::InitialHistory::constant(values))
    }

    #[staticmethod]
    fn linear(values: Vec<f64>, slopes: Vec<f64>) -> PyResult<Self> {
        model::InitialHistory::linear(values, slopes).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn sampled(times: Vec<f64>, values: Vec<Vec<f64>>, slopes: Vec<Vec<f64>>) -> PyResult<Self> {
        model::InitialHistory::sampled(times, values, slopes).map(Self).map_err(py_err)
    }

    /// Constant history with phases spread over `diameter`.
    #[staticmethod]
    #[pyo3(signature = (n, diameter, jitter = 0.0, seed = 0))]
    fn spread(n: usize, diameter: f64, jitter: f64, seed: u64) -> PyResult<Self> {
        model::spread_phases(n, diameter, jitter, seed)
            .map(|p| Self(model::InitialHistory::constant(p)))
            .map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn value_at(&self, s: f64) -> Vec<f64> {
        self.0.value_at(s)
    }
}

#[pyclass(name = "Trajectory", frozen, skip_from_py_object)]
struct PyTrajectory {
    inner: integrator::Trajectory,
    diverged_at: Option<f64>,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn delay(&self) -> f64 {
        self.inner.delay()
    }

    #[getter]
    fn diverged_at(&self) -> Option<f64> {
        self.diverged_at
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    /// Sample rows of `θ`, one list per time.
    #[getter]
    fn phases(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|k| self.inner.phases(k).to_vec()).collect()
    }

    #[getter]
    fn frequencies(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|k| self.inner.frequencies(k).to_vec()).collect()
    }

    #[getter]
    fn frequency_rates(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|k| self.inner.frequency_rates(k).to_vec()).collect()
    }

    /// `(D(θ), D(ω))` per sample.
    fn diameters(&self) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let d = diagnostics::diameters(&self.inner).map_err(py_err)?;
        Ok((d.d_theta, d.d_omega))
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        self.inner.write_csv(BufWriter::new(file)).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, delay = 0.0))]
    fn read_csv(path: &str, delay: f64) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        let inner = integrator::Trajectory::read_csv(file, delay).map_err(py_err)?;
        Ok(Self {
            inner,
            diverged_at: None,
        })
    }
}

/// Draws `n` natural frequencies, e.g.
/// `sample_frequencies({"kind": "uniform", "lo": -1, "hi": 1, "seed": 7}, 10)`.
#[pyfunction]
fn sample_frequencies(distribution: &Bound<'_, PyAny>, n: usize) -> PyResult<Vec<f64>> {
    let dist: FrequencyDistribution = from_py(distribution)?;
    model::sample_frequencies(&dist, n).map_err(py_err)
}

#[pyfunction]
fn derived_scales<'py>(py: Python<'py>, system: &PySystem, history: &PyHistory) -> PyResult<Bound<'py, PyAny>> {
    let s = model::derived_scales(&system.0, &history.0).map_err(py_err)?;
    to_py(py, &s)
}

#[pyfunction]
fn dual_angle(d_theta0: f64) -> PyResult<f64> {
    hypotheses::dual_angle(d_theta0).map_err(py_err)
}

#[pyfunction]
fn kappa_threshold(n: usize, d_omega: f64, d_theta0: f64, delta: f64) -> PyResult<f64> {
    hypotheses::kappa_threshold(n, d_omega, d_theta0, delta).map_err(py_err)
}

#[pyfunction]
fn tau_bar(delta: f64, r_omega: f64, d_star: f64) -> PyResult<f64> {
    hypotheses::tau_bar(delta, r_omega, d_star).map_err(py_err)
}

fn resolve_delta(system: &PySystem, history: &PyHistory, delta: Option<f64>) -> PyResult<f64> {
    match delta {
        Some(d) => Ok(d),
        None => Ok(default_delta(model::derived_scales(&system.0, &history.0).map_err(py_err)?.d_theta0)),
    }
}

/// Hypothesis report as a dict; `delta` defaults from the initial diameter.
#[pyfunction]
#[pyo3(signature = (system, history, delta = None))]
fn certify<'py>(
    py: Python<'py>,
    system: &PySystem,
    history: &PyHistory,
    delta: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let delta = resolve_delta(system, history, delta)?;
    let report = hypotheses::certify(&system.0, &history.0, delta).map_err(py_err)?;
    to_py(py, &report)
}

/// Integrates to `t_end`. A divergent run returns the partial trajectory
/// with `diverged_at` set unless `strict` is true.
#[pyfunction]
#[pyo3(signature = (system, history, t_end, settings = None, strict = false))]
fn integrate(
    py: Python<'_>,
    system: &PySystem,
    history: &PyHistory,
    t_end: f64,
    settings: Option<&Bound<'_, PyAny>>,
    strict: bool,
) -> PyResult<PyTrajectory> {
    let settings: IntegratorSettings = from_py_or_default(settings)?;
    let (sys, hist) = (system.0.clone(), history.0.clone());
    let run = py
        .detach(move || integrator::integrate_partial(&sys, &hist, t_end, &settings))
        .map_err(py_err)?;
    if let (true, Some(time)) = (strict, run.diverged_at) {
        return Err(py_err(Error::Divergence { time }));
    }
    Ok(PyTrajectory {
        inner: run.trajectory,
        diverged_at: run.diverged_at,
    })
}

#[pyfunction]
fn select_eta<'py>(py: Python<'py>, kappa: f64, tau: f64, zeta_star: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &diagnostics::select_eta(kappa, tau, zeta_star).map_err(py_err)?)
}

#[pyfunction]
fn fit_rate<'py>(py: Python<'py>, trajectory: &PyTrajectory, t_lo: f64, t_hi: f64) -> PyResult<Bound<'py, PyAny>> {
    let d = diagnostics::diameters(&trajectory.inner).map_err(py_err)?;
    to_py(py, &diagnostics::fit_rate(&d, (t_lo, t_hi)).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (trajectory, threshold = 1e-8))]
fn sync_verdict(trajectory: &PyTrajectory, threshold: f64) -> PyResult<bool> {
    let d = diagnostics::diameters(&trajectory.inner).map_err(py_err)?;
    Ok(diagnostics::sync_verdict(&d, threshold))
}

/// Full diagnostic bundle as a dict.
#[pyfunction]
#[pyo3(signature = (system, history, trajectory, delta = None, sync_threshold = 1e-8, fit_window = None, tolerances = None))]
#[allow(clippy::too_many_arguments)]
fn analyze<'py>(
    py: Python<'py>,
    system: &PySystem,
    history: &PyHistory,
    trajectory: &PyTrajectory,
    delta: Option<f64>,
    sync_threshold: f64,
    fit_window: Option<(f64, f64)>,
    tolerances: Option<&Bound<'_, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let delta = resolve_delta(system, history, delta)?;
    let tolerances: Tolerances = from_py_or_default(tolerances)?;
    let report = hypotheses::certify(&system.0, &history.0, delta).map_err(py_err)?;
    let bundle = diagnostics::analyze(
        &system.0,
        &report,
        &trajectory.inner,
        trajectory.diverged_at,
        sync_threshold,
        fit_window,
        &tolerances,
    )
    .map_err(py_err)?;
    to_py(py, &bundle)
}

/// Runs a sweep described by TOML text, appending records to `out`.
#[pyfunction]
#[pyo3(signature = (spec_toml, out, jobs = 1))]
fn run_sweep<'py>(py: Python<'py>, spec_toml: &str, out: &str, jobs: usize) -> PyResult<Bound<'py, PyAny>> {
    let spec = SweepSpec::from_toml(spec_toml).map_err(py_err)?;
    let out = std::path::PathBuf::from(out);
    let summary = py.detach(move || sweep::run_sweep(&spec, jobs, &out)).map_err(py_err)?;
    to_py(py, &summary)
}

#[pymodule(name = "delaysync")]
fn delaysync_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyHistory>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(sample_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(derived_scales, m)?)?;
    m.add_function(wrap_pyfunction!(dual_angle, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(tau_bar, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(select_eta, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(sync_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
