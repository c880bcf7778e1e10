//! Python bindings. Runs return plain dicts and lists so callers need no
//! extra packages.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use growthopt::config::{parse_config, scenario_to_toml};
use growthopt::{Scenario, SolverPath};

fn scenario_from(preset: Option<&str>, config: Option<&str>) -> PyResult<Scenario> {
    match (preset, config) {
        (Some(name), None) => {
            Scenario::preset(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))
        }
        (None, Some(text)) => parse_config(text).map_err(|e| PyValueError::new_err(e.to_string())),
        _ => Err(PyValueError::new_err("pass exactly one of preset= or config=")),
    }
}

/// Run a growth evolution and return its history.
///
/// `preset` names a built-in scenario; `config` is TOML text in the CLI
/// format. `solver` and `n_iter` override the scenario.
#[pyfunction]
#[pyo3(signature = (preset=None, config=None, solver=None, n_iter=None))]
fn run<'py>(
    py: Python<'py>,
    preset: Option<&str>,
    config: Option<&str>,
    solver: Option<&str>,
    n_iter: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut sc = scenario_from(preset, config)?;
    match solver {
        None => {}
        Some("analytic") => sc.solver_path = SolverPath::Analytic,
        Some("numerical") => sc.solver_path = SolverPath::Numerical,
        Some(s) => return Err(PyValueError::new_err(format!("unknown solver {s:?}"))),
    }
    if let Some(n) = n_iter {
        sc.n_iter = n;
    }
    let history = py
        .detach(|| growthopt::run(&sc))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("name", &sc.name)?;
    out.set_item("objective", history.records.iter().map(|r| r.objective).collect::<Vec<_>>())?;
    out.set_item("kkt_residual", history.records.iter().map(|r| r.kkt_residual).collect::<Vec<_>>())?;
    out.set_item("mass", history.records.iter().map(|r| r.mass).collect::<Vec<_>>())?;
    out.set_item("roundness", history.records.iter().map(|r| r.roundness).collect::<Vec<_>>())?;
    out.set_item("converged", history.all_converged())?;
    out.set_item("element_areas", &history.element_areas)?;
    out.set_item("final_gamma", &history.final_gamma)?;
    out.set_item("final_displacement", &history.final_displacement)?;
    Ok(out)
}

/// Parse a config and return it fully resolved, as TOML text.
#[pyfunction]
fn validate(config: &str) -> PyResult<String> {
    let sc = parse_config(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(scenario_to_toml(&sc))
}

/// Run the built-in oracle suite; returns `(name, passed, detail)` tuples.
#[pyfunction]
fn selftest(py: Python<'_>) -> PyResult<Vec<(String, bool, String)>> {
    let checks = py
        .detach(growthopt::selftest::run_selftest)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(checks.into_iter().map(|c| (c.name.to_string(), c.passed, c.detail)).collect())
}

#[pymodule]
fn growthopt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
