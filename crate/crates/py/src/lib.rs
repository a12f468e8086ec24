//! Python bindings: scenario and config runs, plus a few model kernels.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mhrate::config::{parse_value, Config};
use mhrate::metrics::RunSummary;
use mhrate::runner::run_experiment;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load(config: &str) -> PyResult<Config> {
    match mhrate::scenarios::find(config) {
        Some(s) => Ok(s.config()),
        None => Config::parse(config).map_err(value_err),
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("policy", s.policy_label())?;
    d.set_item("streams", &s.meta.streams)?;
    d.set_item("networks", &s.meta.networks)?;
    d.set_item("epochs", s.epochs)?;
    d.set_item("rate", &s.rate)?;
    d.set_item("utilization", &s.utilization)?;
    d.set_item("mean_delay", &s.mean_delay)?;
    d.set_item("loss_ratio", &s.loss_ratio)?;
    d.set_item("psnr", &s.psnr)?;
    d.set_item("fluctuation", &s.fluctuation)?;
    d.set_item("convergence_time", &s.convergence_time)?;
    d.set_item("mean_psnr", s.mean_psnr())?;
    d.set_item("psnr_spread", s.psnr_spread())?;
    Ok(d)
}

/// Run a canned scenario name or TOML config text. Returns one dict per
/// sweep point with its label, per-policy summaries and comparison CSV.
#[pyfunction]
#[pyo3(signature = (config, seed=None, sweep=None, out=None, base_dir="."))]
fn run<'py>(
    py: Python<'py>,
    config: &str,
    seed: Option<u64>,
    sweep: Option<Vec<(String, Vec<String>)>>,
    out: Option<&str>,
    base_dir: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = load(config)?;
    if let Some(seed) = seed {
        cfg.sim.seed = seed;
    }
    let extra: Vec<(String, Vec<toml::Value>)> = sweep
        .unwrap_or_default()
        .into_iter()
        .map(|(k, vs)| (k, vs.iter().map(|v| parse_value(v)).collect()))
        .collect();
    let base = Path::new(base_dir).to_path_buf();
    let results = py
        .detach(|| run_experiment(&cfg, &base, &extra, out.map(Path::new)))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    results
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("label", &p.label)?;
            let runs = p.summaries.iter().map(|s| summary_dict(py, s)).collect::<PyResult<Vec<_>>>()?;
            d.set_item("summaries", runs)?;
            d.set_item("comparison", &p.comparison)?;
            Ok(d)
        })
        .collect()
}

/// Problems found in a config; empty when it is valid.
#[pyfunction]
#[pyo3(signature = (config, base_dir="."))]
fn validate(config: &str, base_dir: &str) -> PyResult<Vec<String>> {
    match Config::parse(config) {
        Ok(c) => Ok(c.diagnostics(Path::new(base_dir))),
        Err(e) => Ok(vec![e.to_string()]),
    }
}

#[pyfunction]
fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    mhrate::scenarios::SCENARIOS.iter().map(|s| (s.name, s.description)).collect()
}

#[pyfunction]
fn scenario_toml(name: &str) -> PyResult<String> {
    mhrate::scenarios::find(name)
        .map(|s| s.toml())
        .ok_or_else(|| PyValueError::new_err(format!("unknown scenario '{name}'")))
}

#[pyfunction]
fn late_loss_probability(deadline: f64, mean_delay: f64) -> f64 {
    mhrate::net_model::late_loss_probability(deadline, mean_delay)
}

#[pyfunction]
fn psnr(mse: f64) -> f64 {
    mhrate::distortion::psnr(mse)
}

#[pyfunction]
fn sigma_gamma(a: f64, b: f64, h: f64, g: f64, gamma: f64) -> PyResult<f64> {
    mhrate::policy::hinf::sigma_gamma(a, b, h, g, gamma).map_err(value_err)
}

#[pyfunction]
fn gamma_star(a: f64, b: f64, h: f64, g: f64) -> f64 {
    mhrate::policy::hinf::gamma_star(a, b, h, g)
}

/// Fit `(d0, theta, r0)` to at least three `(rate, mse)` points.
#[pyfunction]
fn fit_dr_model(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let fit = mhrate::distortion::fit_dr_model(&points).map_err(value_err)?;
    Ok((fit.d0, fit.theta, fit.r0))
}

#[pymodule]
fn mhrate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_toml, m)?)?;
    m.add_function(wrap_pyfunction!(late_loss_probability, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_star, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dr_model, m)?)?;
    Ok(())
}
