//! Python bindings: load scenarios (built-in or TOML), apply overrides, run the pipeline
//! and read the report as JSON.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;
use stochstab::scenario::{self, Overrides};

fn to_py(e: stochstab::Error) -> PyErr {
    match e {
        stochstab::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// `(id, description)` for every built-in scenario.
#[pyfunction]
fn list_builtins() -> Vec<(String, String)> {
    scenario::list_builtins()
        .into_iter()
        .map(|b| (b.id.to_string(), b.description.to_string()))
        .collect()
}

/// The gain `(a + sqrt(a^2 + b^2)) / b` of the universal formula.
#[pyfunction]
fn sontag_phi(a: f64, b: f64) -> PyResult<f64> {
    stochstab::feedback::sontag_phi(a, b).map_err(to_py)
}

#[pyclass(name = "Scenario", module = "stochstab_py")]
struct PyScenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn builtin(id: &str) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::builtin_scenario(id).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::Scenario::from_toml(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::load_scenario(&path).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// Returns a copy with the given simulation parameters replaced.
    #[pyo3(signature = (seed=None, paths=None, dt=None, horizon=None))]
    fn with_overrides(
        &self,
        seed: Option<u64>,
        paths: Option<usize>,
        dt: Option<f64>,
        horizon: Option<f64>,
    ) -> Self {
        let mut inner = self.inner.clone();
        inner.apply(&Overrides {
            seed,
            paths,
            dt,
            horizon,
        });
        Self { inner }
    }

    /// Runs the pipeline; when `out_dir` is given the report, dumps and plot script are
    /// written to `out_dir/<name>/`.
    #[pyo3(signature = (out_dir=None))]
    fn run(&self, py: Python<'_>, out_dir: Option<PathBuf>) -> PyResult<PyRunReport> {
        let sc = self.inner.clone();
        py.detach(move || {
            let mut outcome = scenario::run(&sc).map_err(to_py)?;
            if let Some(dir) = out_dir {
                outcome.write(&dir.join(&sc.name)).map_err(to_py)?;
            }
            let json = serde_json::to_string_pretty(&outcome.report)
                .map_err(|e| PyValueError::new_err(e.to_string()))?;
            Ok(PyRunReport {
                passed: outcome.report.passed,
                exit_code: outcome.exit_code(),
                certificates: outcome
                    .report
                    .certificates
                    .iter()
                    .map(|c| (c.name.clone(), c.passed, c.summary.clone()))
                    .collect(),
                json,
            })
        })
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?})", self.inner.name)
    }
}

#[pyclass(name = "RunReport", module = "stochstab_py", frozen)]
struct PyRunReport {
    #[pyo3(get)]
    passed: bool,
    #[pyo3(get)]
    exit_code: i32,
    /// `(name, passed, summary)` per certificate.
    #[pyo3(get)]
    certificates: Vec<(String, bool, String)>,
    json: String,
}

#[pymethods]
impl PyRunReport {
    fn to_json(&self) -> String {
        self.json.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunReport(passed={}, certificates={})",
            self.passed,
            self.certificates.len()
        )
    }
}

#[pymodule]
fn stochstab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(list_builtins, m)?)?;
    m.add_function(wrap_pyfunction!(sontag_phi, m)?)?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunReport>()?;
    Ok(())
}
