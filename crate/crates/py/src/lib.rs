//! Python bindings: configuration, experiment runs and the numerical kernels.
//!
//! Matrices cross the boundary as lists of rows; infinite stock is `math.inf`.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use allocsim::dual::{self, DualState, WeightedDualSpec};
use allocsim::harness::{self, ExperimentOutput, Mode};
use allocsim::model::{self, NonStationaryKind};
use allocsim::{segmentation, Budget, StepRule};

fn to_py(err: allocsim::Error) -> PyErr {
    match err {
        allocsim::Error::Io { .. } => PyOSError::new_err(err.to_string()),
        e if e.is_config_error() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Array2::from_shape_vec((m, n), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn budgets(values: &[f64]) -> Vec<Budget> {
    values.iter().map(|&b| Budget::from_f64(b)).collect()
}

/// A validated experiment configuration.
#[pyclass(name = "SimConfig", module = "allocsim_py", frozen)]
struct PySimConfig {
    inner: allocsim::SimConfig,
}

#[pymethods]
impl PySimConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: allocsim::SimConfig::from_json(text).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: model::load_config(path).map_err(to_py)? })
    }

    /// Ten types at rates `0.1·j`, ten items, Beta(2, 5) preferences.
    #[staticmethod]
    #[pyo3(signature = (horizon, seed = 0))]
    fn stationary(horizon: u64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: model::scenario_stationary(horizon, seed).map_err(to_py)? })
    }

    /// `kind` is `"extreme_budget"` or `"varying_reward"`.
    #[staticmethod]
    #[pyo3(signature = (kind, horizon, hours = 24.0, seed = 0))]
    fn nonstationary(kind: &str, horizon: u64, hours: f64, seed: u64) -> PyResult<Self> {
        let kind: NonStationaryKind = kind.parse().map_err(to_py)?;
        Ok(Self { inner: model::scenario_nonstationary(kind, horizon, hours, seed).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model::save_config(&self.inner, path).map_err(to_py)
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self { inner: self.inner.with_seed(seed) }
    }

    /// The same configuration rescaled to another horizon.
    fn scaled(&self, horizon: u64) -> PyResult<Self> {
        Ok(Self { inner: harness::scale_config(&self.inner, horizon).map_err(to_py)? })
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.instance.horizon
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.instance.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.instance.n()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.instance.mu
    }

    #[getter]
    fn rewards(&self) -> Vec<f64> {
        self.inner.instance.rewards.clone()
    }

    #[getter]
    fn budgets(&self) -> Vec<f64> {
        self.inner.instance.budgets.iter().map(|b| b.as_f64()).collect()
    }

    #[getter]
    fn true_preferences(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.instance.true_preferences)
    }

    fn __repr__(&self) -> String {
        let i = &self.inner.instance;
        format!("SimConfig(m={}, n={}, horizon={}, seed={})", i.m(), i.n(), i.horizon, self.inner.seed)
    }
}

/// Result of one experiment run.
#[pyclass(name = "Experiment", module = "allocsim_py", frozen)]
struct PyExperiment {
    inner: ExperimentOutput,
}

#[pymethods]
impl PyExperiment {
    /// Scalar metrics; absent values are `None`.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = &self.inner.report;
        let d = PyDict::new(py);
        d.set_item("mode", r.mode.as_str())?;
        d.set_item("seed", r.seed)?;
        d.set_item("config_hash", &r.config_hash)?;
        d.set_item("arrivals", r.arrivals)?;
        d.set_item("benchmark_value", r.benchmark_value)?;
        d.set_item("offline_objective", r.offline_objective)?;
        d.set_item("offline_iterations", r.offline_iterations)?;
        d.set_item("offline_converged", r.offline_converged)?;
        d.set_item("offline_residual", r.offline_residual)?;
        d.set_item("online_dual_total", r.online_dual_total)?;
        d.set_item("regret_total", r.regret_total)?;
        d.set_item("regret_average", r.regret_average)?;
        d.set_item("regret_average_realized", r.regret_average_realized)?;
        d.set_item("regret_bound", r.regret_bound)?;
        d.set_item("offline_revenue", r.offline_revenue)?;
        d.set_item("revenue", r.revenue)?;
        d.set_item("greedy_revenue", r.greedy_revenue)?;
        d.set_item("ucb_rounds", r.ucb_rounds)?;
        d.set_item("segments", r.segments)?;
        d.set_item("runtime_seconds", r.runtime_seconds)?;
        Ok(d)
    }

    #[getter]
    fn selections(&self) -> Vec<u64> {
        self.inner.report.selections.clone()
    }

    #[getter]
    fn sales(&self) -> Vec<u64> {
        self.inner.report.sales.clone()
    }

    #[getter]
    fn remaining(&self) -> Vec<f64> {
        self.inner.report.remaining.clone()
    }

    /// `(checkpoint, ‖P̂ − P*‖_F)` pairs.
    #[getter]
    fn pref_error(&self) -> Vec<(u64, f64)> {
        self.inner.report.pref_error.clone()
    }

    /// `(start, end, label, weights)` per segment, empty for stationary runs.
    #[getter]
    fn segments(&self) -> Vec<(f64, f64, &'static str, Vec<f64>)> {
        self.inner.plan.as_ref().map_or_else(Vec::new, |p| {
            p.segments.iter().map(|s| (s.t_start, s.t_end, s.label.as_str(), s.weights.clone())).collect()
        })
    }

    /// Writes the CSV report files and returns their paths.
    #[pyo3(signature = (out_dir, trace = false))]
    fn write(&self, out_dir: PathBuf, trace: bool) -> PyResult<Vec<PathBuf>> {
        harness::emit_report(&self.inner, &out_dir, trace).map_err(to_py)
    }
}

/// Runs `mode` (`offline`, `stationary`, `nonstationary`, `greedy` or
/// `segment-plan`) on `config`. The GIL is released while running.
#[pyfunction]
fn run(py: Python<'_>, config: &PySimConfig, mode: &str) -> PyResult<PyExperiment> {
    let mode: Mode = mode.parse().map_err(to_py)?;
    let inner = py.detach(|| harness::run_experiment(&config.inner, mode)).map_err(to_py)?;
    Ok(PyExperiment { inner })
}

fn spec(
    weights: Vec<f64>,
    budget_scale: f64,
    preferences: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    budget_values: &[f64],
    mu: f64,
) -> PyResult<WeightedDualSpec> {
    Ok(WeightedDualSpec {
        weights,
        budget_scale,
        preferences: matrix(preferences)?,
        rewards,
        budgets: budgets(budget_values),
        mu,
    })
}

/// `f(Λ) = μ Σ_j w_j P̄_j log Z_j + s⟨Λ, b⟩`.
#[pyfunction]
#[pyo3(signature = (lam, weights, preferences, rewards, budgets, mu, budget_scale = 1.0))]
fn dual_objective(
    lam: Vec<f64>,
    weights: Vec<f64>,
    preferences: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    budgets: Vec<f64>,
    mu: f64,
    budget_scale: f64,
) -> PyResult<f64> {
    let s = spec(weights, budget_scale, preferences, rewards, &budgets, mu)?;
    dual::dual_objective(&s, &lam).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (lam, weights, preferences, rewards, budgets, mu, budget_scale = 1.0))]
fn dual_gradient(
    lam: Vec<f64>,
    weights: Vec<f64>,
    preferences: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    budgets: Vec<f64>,
    mu: f64,
    budget_scale: f64,
) -> PyResult<Vec<f64>> {
    let s = spec(weights, budget_scale, preferences, rewards, &budgets, mu)?;
    dual::dual_gradient(&s, &lam).map_err(to_py)
}

/// Softmax assignment probabilities, one row per type.
#[pyfunction]
fn recover_primal(preferences: Vec<Vec<f64>>, rewards: Vec<f64>, mu: f64, lam: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let p = matrix(preferences)?;
    Ok(rows(&dual::recover_primal(p.view(), &rewards, mu, &lam).map_err(to_py)?))
}

/// Minimizes the dual over `[0, lambda_max]^n`; returns `(Λ*, f*, converged)`.
#[pyfunction]
#[pyo3(signature = (weights, preferences, rewards, budgets, mu, budget_scale = 1.0, lambda_max = 1.0, tol = 1e-9, max_iter = 20_000))]
#[allow(clippy::too_many_arguments)]
fn solve_offline(
    py: Python<'_>,
    weights: Vec<f64>,
    preferences: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    budgets: Vec<f64>,
    mu: f64,
    budget_scale: f64,
    lambda_max: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<(Vec<f64>, f64, bool)> {
    let s = spec(weights, budget_scale, preferences, rewards, &budgets, mu)?;
    let state = DualState::new(&s.budgets, lambda_max, budget_scale, None, StepRule::Fixed, 1.0).map_err(to_py)?;
    let sol = py.detach(|| dual::solve_offline(&s, &state, tol, max_iter)).map_err(to_py)?;
    Ok((sol.lambda, sol.objective, sol.converged))
}

/// Positive root `v` of the type-B threshold quadratic.
#[pyfunction]
fn solve_v_threshold(rates: Vec<f64>, delta: f64) -> PyResult<f64> {
    segmentation::solve_v_threshold(&rates, delta).map_err(to_py)
}

/// `(U, L, δ)` from per-type `(min, max)` rate pairs.
#[pyfunction]
fn bound_type_probability(extrema: Vec<(f64, f64)>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let b = segmentation::bound_type_probability(&extrema).map_err(to_py)?;
    Ok((b.upper, b.lower, b.delta))
}

/// `count` stationary arrivals as `(time, type)` pairs.
#[pyfunction]
fn sample_stationary_stream(rates: Vec<f64>, count: usize, seed: u64) -> PyResult<Vec<(f64, usize)>> {
    let s = allocsim::arrivals::sample_stationary_stream(&rates, count, seed).map_err(to_py)?;
    Ok(s.arrivals.iter().map(|a| (a.time, a.kind)).collect())
}

#[pymodule]
fn allocsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(dual_objective, m)?)?;
    m.add_function(wrap_pyfunction!(dual_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(recover_primal, m)?)?;
    m.add_function(wrap_pyfunction!(solve_offline, m)?)?;
    m.add_function(wrap_pyfunction!(solve_v_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(bound_type_probability, m)?)?;
    m.add_function(wrap_pyfunction!(sample_stationary_stream, m)?)?;
    Ok(())
}
