//! Python bindings. Configurations travel as JSON text in the same format the
//! command-line tool reads; reports come back as JSON text.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use whitham::cli::config::ConfigFile;
use whitham::cli::suites::{self, Suite};
use whitham::tauflow::TauFunction;
use whitham::theta::{LatticeParam, THETA_TOL};
use whitham::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Configuration(_) | Error::InvalidInput(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn config(text: Option<&str>) -> PyResult<ConfigFile> {
    match text {
        Some(t) => ConfigFile::from_json(t).map_err(to_py),
        None => Ok(ConfigFile::builtin()),
    }
}

fn lattice(tau: Complex64) -> PyResult<LatticeParam> {
    LatticeParam::new(tau).map_err(to_py)
}

fn suite(name: &str) -> PyResult<Suite> {
    clap::ValueEnum::from_str(name, true).map_err(|_| PyValueError::new_err(format!("unknown suite {name:?}")))
}

/// The built-in configuration as JSON text.
#[pyfunction]
fn builtin_config() -> PyResult<String> {
    serde_json::to_string_pretty(&ConfigFile::builtin()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs a verification suite and returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (suite_name = "all", config_json = None, seed = 0, timing = true))]
fn run_suite(suite_name: &str, config_json: Option<&str>, seed: u64, timing: bool) -> PyResult<String> {
    let cfg = config(config_json)?;
    let report = suites::run_suite(suite(suite_name)?, &cfg, seed).map_err(to_py)?;
    let report = if timing { report } else { report.without_timing() };
    report.to_json().map_err(to_py)
}

/// Extracts the hydrodynamic system of a contour triple as JSON text.
#[pyfunction]
#[pyo3(signature = (genus, config_json = None, triple = None, seed = 0))]
fn extract(genus: u8, config_json: Option<&str>, triple: Option<[String; 3]>, seed: u64) -> PyResult<String> {
    let cfg = config(config_json)?;
    let rep = suites::extract(&cfg, genus, triple, seed).map_err(to_py)?;
    serde_json::to_string_pretty(&rep).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn theta(z: Complex64, tau: Complex64) -> PyResult<Complex64> {
    Ok(whitham::theta::theta(z, lattice(tau)?, THETA_TOL))
}

/// Genus-zero potential at `z` for a named contour of the config's genus0 block.
#[pyfunction]
#[pyo3(signature = (z, contour, config_json = None))]
fn potential_g0(z: Complex64, contour: &str, config_json: Option<&str>) -> PyResult<Complex64> {
    let cfg = config(config_json)?;
    let g = cfg.genus0.ok_or_else(|| PyValueError::new_err("config has no genus0 block"))?;
    Ok(whitham::genus0::potential_g0(z, contour, &g, None).map_err(to_py)?.0)
}

/// Genus-one potential at `z` for a named contour of the config's genus1 block.
#[pyfunction]
#[pyo3(signature = (z, contour, config_json = None))]
fn potential_g1(z: Complex64, contour: &str, config_json: Option<&str>) -> PyResult<Complex64> {
    let cfg = config(config_json)?;
    let g = cfg.genus1.ok_or_else(|| PyValueError::new_err("config has no genus1 block"))?;
    Ok(whitham::genus1::potential_g1(z, contour, &g).map_err(to_py)?.0)
}

/// Maximum relative residual of the KP Fay identity for a Schur tau-function.
#[pyfunction]
#[pyo3(signature = (partition, times = 4, samples = 50, seed = 0))]
fn kp_fay_residual(partition: Vec<usize>, times: usize, samples: usize, seed: u64) -> PyResult<f64> {
    let tau = TauFunction::new(partition, times).map_err(to_py)?;
    Ok(whitham::tauflow::tau_fay_check(&tau, samples, seed))
}

#[pymodule]
fn whitham_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(builtin_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(theta, m)?)?;
    m.add_function(wrap_pyfunction!(potential_g0, m)?)?;
    m.add_function(wrap_pyfunction!(potential_g1, m)?)?;
    m.add_function(wrap_pyfunction!(kp_fay_residual, m)?)?;
    Ok(())
}
