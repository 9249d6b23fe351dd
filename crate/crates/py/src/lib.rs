//! Python bindings for the `wcvar` crate.
//!
//! Returns are passed as lists of rows (one list of asset returns per day).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use wcvar::backtest::TcMode;
use wcvar::pipeline::{self, Strategy};
use wcvar::{
    BacktestOptions, BoxSpec, Error, Kappa, KmcOptions, MomentAmbiguity, RadiusConfig, RobustConfig, SmoothingParam,
    StrategySchedule, TailSpec,
};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_json<T: Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn kappa(k: u8) -> PyResult<Kappa> {
    Kappa::try_from(k).map_err(py_err)
}

fn tail(a: f64) -> PyResult<TailSpec> {
    TailSpec::new(a).map_err(py_err)
}

#[pyclass(name = "ReturnsMatrix", frozen)]
#[derive(Clone)]
struct PyReturns(wcvar::ReturnsMatrix);

#[pymethods]
impl PyReturns {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        wcvar::ReturnsMatrix::from_rows(&rows).map(PyReturns).map_err(py_err)
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.0.n_obs()
    }

    #[getter]
    fn n_assets(&self) -> usize {
        self.0.n_assets()
    }

    fn column_means(&self) -> Vec<f64> {
        self.0.column_means()
    }

    fn replicate(&self, times: usize) -> Self {
        PyReturns(self.0.replicate(times))
    }

    fn __repr__(&self) -> String {
        format!("ReturnsMatrix({} x {})", self.0.n_obs(), self.0.n_assets())
    }
}

#[pyclass(name = "SolveReport", frozen)]
struct PySolveReport(wcvar::SolveReport);

#[pymethods]
impl PySolveReport {
    #[getter]
    fn model(&self) -> &str {
        &self.0.model
    }
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.portfolio.weights.clone()
    }
    #[getter]
    fn threshold(&self) -> f64 {
        self.0.portfolio.threshold
    }
    #[getter]
    fn objective(&self) -> f64 {
        self.0.objective
    }
    #[getter]
    fn status(&self) -> String {
        format!("{:?}", self.0.status)
    }
    #[getter]
    fn optimal(&self) -> bool {
        self.0.is_optimal()
    }
    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }
    fn __repr__(&self) -> String {
        format!("SolveReport({}, objective={:e}, status={:?})", self.0.model, self.0.objective, self.0.status)
    }
}

#[pyclass(name = "BacktestResult", frozen)]
struct PyBacktest(wcvar::BacktestResult);

#[pymethods]
impl PyBacktest {
    #[getter]
    fn wealth(&self) -> Vec<f64> {
        self.0.wealth.clone()
    }
    #[getter]
    fn daily_returns(&self) -> Vec<f64> {
        self.0.daily_returns.clone()
    }
    #[getter]
    fn rebalance_dates(&self) -> Vec<usize> {
        self.0.rebalance_dates.clone()
    }
    #[getter]
    fn total_tc(&self) -> f64 {
        self.0.total_tc
    }
    #[getter]
    fn weights_path(&self) -> Vec<Vec<f64>> {
        self.0.weights_path.clone()
    }
    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }
}

#[pyfunction]
fn empirical_cvar(losses: Vec<f64>, tail_mass: f64) -> PyResult<f64> {
    wcvar::empirical_cvar(&losses, tail(tail_mass)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (r, rho, tail_mass = 0.05, long_only = true))]
fn solve_nmc(r: &PyReturns, rho: f64, tail_mass: f64, long_only: bool) -> PyResult<PySolveReport> {
    wcvar::solve_nmc(&r.0, rho, tail(tail_mass)?, long_only).map(PySolveReport).map_err(py_err)
}

/// Robust mean-CVaR with a Wasserstein ball of order `kappa` (1 or 2).
#[pyfunction]
#[pyo3(signature = (r, rho, delta, kappa = 1, tail_mass = 0.05, long_only = true))]
fn solve_rmc(r: &PyReturns, rho: f64, delta: f64, kappa: u8, tail_mass: f64, long_only: bool) -> PyResult<PySolveReport> {
    let k = self::kappa(kappa)?;
    let cfg = RobustConfig::new(delta, k, tail(tail_mass)?, rho, long_only).map_err(py_err)?;
    match k {
        Kappa::One => wcvar::solve_rmc1(&r.0, &cfg),
        Kappa::Two => wcvar::solve_rmc2(&r.0, &cfg),
    }
    .map(PySolveReport)
    .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (r, rho, width = 0.5, tail_mass = 0.05))]
fn solve_bmc(r: &PyReturns, rho: f64, width: f64, tail_mass: f64) -> PyResult<PySolveReport> {
    let bx = BoxSpec::uniform(r.0.n_obs(), width).map_err(py_err)?;
    wcvar::solve_bmc(&r.0, &bx, rho, tail(tail_mass)?).map(PySolveReport).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (r, rho, gamma1, gamma2, tail_mass = 0.05))]
fn solve_kmc(r: &PyReturns, rho: f64, gamma1: f64, gamma2: f64, tail_mass: f64) -> PyResult<PySolveReport> {
    let amb = MomentAmbiguity::from_returns(&r.0, gamma1, gamma2).map_err(py_err)?;
    wcvar::solve_kmc(&r.0, &amb, rho, tail(tail_mass)?, &KmcOptions::default())
        .map(PySolveReport)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (pi, r, delta, kappa = 1))]
fn worst_case_mean(pi: Vec<f64>, r: &PyReturns, delta: f64, kappa: u8) -> PyResult<f64> {
    wcvar::worst_case_mean(&pi, &r.0, delta, self::kappa(kappa)?).map_err(py_err)
}

/// Selected radius and its ingredients, as a JSON string.
#[pyfunction]
#[pyo3(signature = (r, rho, kappa = 1, tail_mass = 0.05, confidence = 0.95, mc_samples = 10000, seed = 0, t = 1e-4))]
#[allow(clippy::too_many_arguments)]
fn select_radius(
    r: &PyReturns,
    rho: f64,
    kappa: u8,
    tail_mass: f64,
    confidence: f64,
    mc_samples: usize,
    seed: u64,
    t: f64,
) -> PyResult<(f64, String)> {
    let cfg = RadiusConfig::new(self::kappa(kappa)?, confidence, mc_samples, seed).map_err(py_err)?;
    let t = SmoothingParam::new(t).map_err(py_err)?;
    let res = wcvar::select_radius(&r.0, rho, tail(tail_mass)?, &cfg, t).map_err(py_err)?;
    Ok((res.delta_star, to_json(&res)?))
}

#[pyfunction]
#[pyo3(signature = (weights, r, threshold = 0.05, tc_rate = 0.002, tc_mode = "compound"))]
fn run_backtest(weights: Vec<f64>, r: &PyReturns, threshold: f64, tc_rate: f64, tc_mode: &str) -> PyResult<PyBacktest> {
    let tc_mode = match tc_mode {
        "compound" => TcMode::Compound,
        "off" => TcMode::Off,
        "report" => TcMode::ReportOnly,
        other => return Err(PyValueError::new_err(format!("unknown tc_mode {other:?}"))),
    };
    let opts = BacktestOptions { threshold, tc_rate, tc_mode };
    wcvar::run_backtest(&StrategySchedule::constant(weights), &r.0, &opts)
        .map(PyBacktest)
        .map_err(py_err)
}

/// Performance statistics of a daily return series, as a JSON string.
#[pyfunction]
#[pyo3(signature = (returns, tail_mass = 0.05))]
fn compute_metrics(returns: Vec<f64>, tail_mass: f64) -> PyResult<String> {
    to_json(&wcvar::compute_metrics(&returns, tail(tail_mass)?).map_err(py_err)?)
}

/// Runs a pipeline command (`ingest`, `radius`, `solve`, `backtest`,
/// `compare`) from a JSON run configuration; returns the config hash.
#[pyfunction]
fn run_command(command: &str, config_json: &str) -> PyResult<String> {
    let cfg: pipeline::RunConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().map_err(py_err)?;
    match command {
        "ingest" => pipeline::cmd_ingest(&cfg).map(drop),
        "radius" => pipeline::cmd_radius(&cfg).map(drop),
        "solve" => pipeline::cmd_solve(&cfg).map(drop),
        "backtest" => pipeline::cmd_backtest(&cfg).map(drop),
        "compare" => pipeline::cmd_compare(&cfg).map(drop),
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    }
    .map_err(py_err)?;
    Ok(cfg.hash())
}

#[pyfunction]
fn parse_strategy(name: &str) -> PyResult<String> {
    name.parse::<Strategy>().map(|s| s.to_string()).map_err(py_err)
}

#[pymodule]
fn pywcvar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyReturns>()?;
    m.add_class::<PySolveReport>()?;
    m.add_class::<PyBacktest>()?;
    m.add_function(wrap_pyfunction!(empirical_cvar, m)?)?;
    m.add_function(wrap_pyfunction!(solve_nmc, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rmc, m)?)?;
    m.add_function(wrap_pyfunction!(solve_bmc, m)?)?;
    m.add_function(wrap_pyfunction!(solve_kmc, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_mean, m)?)?;
    m.add_function(wrap_pyfunction!(select_radius, m)?)?;
    m.add_function(wrap_pyfunction!(run_backtest, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    m.add_function(wrap_pyfunction!(parse_strategy, m)?)?;
    Ok(())
}
