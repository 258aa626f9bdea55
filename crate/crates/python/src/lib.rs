//! Python bindings. Trajectories cross the boundary as nested lists indexed
//! `[row][mode]`; rows are time steps for controls and time nodes for states.

use std::path::PathBuf;

use fractrack::cli::{run_optimize, ExportOptions};
use fractrack::forward::{Layout, ModalTrajectory};
use fractrack::mittag_leffler::{ml_eval, MlParams};
use fractrack::optimize::{CostBreakdown, Method, OptimizationReport, TrackingProblem};
use fractrack::scenario::{load_scenario, TrackingScenario};
use fractrack::verify::{run_suite, Suite};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(fractrack, FractrackError, PyException);

fn py_err(e: fractrack::Error) -> PyErr {
    FractrackError::new_err(e.to_string())
}

fn rows(t: &ModalTrajectory) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn parse_method(method: &str) -> PyResult<Method> {
    match method {
        "direct" => Ok(Method::Direct),
        "fixed_point" | "fixed-point" => Ok(Method::FixedPoint),
        other => Err(FractrackError::new_err(format!("unknown method {other:?}; use \"direct\" or \"fixed_point\""))),
    }
}

fn cost_dict<'py>(py: Python<'py>, c: &CostBreakdown) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("total", c.total)?;
    d.set_item("tracking", c.tracking)?;
    d.set_item("terminal", c.terminal)?;
    d.set_item("control", c.control)?;
    Ok(d)
}

/// E_{α,β}(z). With `with_info=True` returns (value, method, error_estimate, warning).
#[pyfunction]
#[pyo3(signature = (alpha, beta, z, with_info = false))]
fn mittag_leffler(py: Python<'_>, alpha: f64, beta: f64, z: f64, with_info: bool) -> PyResult<Py<PyAny>> {
    let ev = ml_eval(MlParams::new(alpha, beta).map_err(py_err)?, z).map_err(py_err)?;
    if with_info {
        let info = (ev.value, format!("{:?}", ev.method).to_lowercase(), ev.error_estimate, ev.accuracy_warning);
        Ok(info.into_pyobject(py)?.into_any().unbind())
    } else {
        Ok(ev.value.into_pyobject(py)?.into_any().unbind())
    }
}

/// Runs self-check suites (all when `suites` is empty) and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (suites = Vec::new()))]
fn verify(py: Python<'_>, suites: Vec<String>) -> PyResult<Py<PyAny>> {
    let chosen: Vec<Suite> = if suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        suites.iter().map(|s| s.parse::<Suite>().map_err(py_err)).collect::<PyResult<_>>()?
    };
    let reports = chosen.into_iter().map(run_suite).collect::<fractrack::Result<Vec<_>>>().map_err(py_err)?;
    let text = serde_json::to_string(&reports).map_err(|e| FractrackError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

/// A tracking scenario: operator, region, targets, weights and grid.
#[pyclass(name = "Scenario", module = "fractrack", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: TrackingScenario,
}

#[pymethods]
impl PyScenario {
    /// The shipped reference scenario.
    #[staticmethod]
    fn example() -> Self {
        Self {
            inner: TrackingScenario::reference_example(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = TrackingScenario::from_json(text).map_err(py_err)?;
        inner.compile_with_source(Some(text)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_scenario(&path).map_err(py_err)?.scenario,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Copy with a different grid, fractional order or weights.
    #[pyo3(signature = (n_modes = None, n_steps = None, alpha = None, weights = None))]
    fn with_overrides(&self, n_modes: Option<usize>, n_steps: Option<usize>, alpha: Option<f64>, weights: Option<(f64, f64, f64)>) -> Self {
        let mut inner = self.inner.clone().with_overrides(n_modes, n_steps, None);
        if let Some(a) = alpha {
            inner.alpha = a;
        }
        if let Some((r1, r2, r3)) = weights {
            inner.weights.r1 = r1;
            inner.weights.r2 = r2;
            inner.weights.r3 = r3;
        }
        Self { inner }
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.discretization.n_modes
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.discretization.n_steps
    }

    /// Builds the discrete problem (projections, Gram matrix, propagators).
    fn problem(&self) -> PyResult<PyProblem> {
        let compiled = self.inner.compile().map_err(py_err)?;
        Ok(PyProblem {
            inner: compiled.problem().map_err(py_err)?,
            direct: compiled.direct_options(),
            fixed_point: compiled.fixed_point_options(),
        })
    }

    /// Full optimize run writing the CSV/JSON exports to `out`; returns the summary.
    #[pyo3(signature = (out, full_domain_desired = false))]
    fn optimize_to(&self, py: Python<'_>, out: PathBuf, full_domain_desired: bool) -> PyResult<Py<PyAny>> {
        let compiled = self.inner.compile().map_err(py_err)?;
        let run = run_optimize(&compiled, &out, ExportOptions { full_domain_desired }).map_err(py_err)?;
        let text = serde_json::to_string(&run.summary).map_err(|e| FractrackError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario({:?}, alpha={}, n_modes={}, n_steps={})",
            self.inner.name, self.inner.alpha, self.inner.discretization.n_modes, self.inner.discretization.n_steps
        )
    }
}

/// The discrete optimal control problem of one scenario.
#[pyclass(name = "Problem", module = "fractrack")]
struct PyProblem {
    inner: TrackingProblem,
    direct: fractrack::optimize::DirectOptions,
    fixed_point: fractrack::optimize::FixedPointOptions,
}

impl PyProblem {
    fn control(&self, u: Vec<Vec<f64>>) -> PyResult<ModalTrajectory> {
        let grid = self.inner.grid();
        let m = self.inner.n_modes();
        if u.len() != grid.n_steps() || u.iter().any(|r| r.len() != m) {
            return Err(FractrackError::new_err(format!("control must be {} rows of {m} modal coefficients", grid.n_steps())));
        }
        ModalTrajectory::from_data(grid, m, Layout::Cellwise, u.concat()).map_err(py_err)
    }
}

#[pymethods]
impl PyProblem {
    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.grid().n_steps()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.grid().nodes()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.basis().eigenvalues().to_vec()
    }

    fn zero_control(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.zero_control())
    }

    /// Modal state at every time node under a cellwise control.
    fn forward(&self, control: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.forward(&self.control(control)?).map_err(py_err)?))
    }

    fn cost<'py>(&self, py: Python<'py>, control: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
        cost_dict(py, &self.inner.cost(&self.control(control)?).map_err(py_err)?)
    }

    /// L²(Q) gradient r₃u + z̄(u), cellwise.
    fn gradient(&self, control: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.gradient(&self.control(control)?).map_err(py_err)?))
    }

    fn variational_residual(&self, control: Vec<Vec<f64>>) -> PyResult<f64> {
        self.inner.variational_residual(&self.control(control)?).map_err(py_err)
    }

    /// Solves for the optimal control with "direct" or "fixed_point".
    #[pyo3(signature = (method = "direct"))]
    fn solve<'py>(&self, py: Python<'py>, method: &str) -> PyResult<Bound<'py, PyDict>> {
        let r: OptimizationReport = match parse_method(method)? {
            Method::Direct => self.inner.solve_direct(self.direct),
            Method::FixedPoint => self.inner.solve_fixed_point(self.fixed_point),
        }
        .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("converged", r.converged)?;
        d.set_item("message", r.message.clone())?;
        d.set_item("control", rows(&r.control))?;
        d.set_item("state", rows(&r.state))?;
        d.set_item("cost", cost_dict(py, &r.cost)?)?;
        d.set_item("terminal_error", r.metrics.terminal_error)?;
        d.set_item("trajectory_error_sup", r.metrics.trajectory_error_sup)?;
        d.set_item("trajectory_error_l2", r.metrics.trajectory_error_l2)?;
        d.set_item("control_norm", r.metrics.control_norm)?;
        d.set_item("variational_residual", r.variational_residual)?;
        d.set_item("residual_tolerance", r.residual_tolerance)?;
        d.set_item("iterations", r.iterations)?;
        Ok(d)
    }
}

#[pymodule]
#[pyo3(name = "fractrack")]
fn pyfractrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(mittag_leffler, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("FractrackError", m.py().get_type::<FractrackError>())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names() {
        assert_eq!(parse_method("direct").unwrap(), Method::Direct);
        assert_eq!(parse_method("fixed-point").unwrap(), Method::FixedPoint);
    }

    #[test]
    fn rows_follow_the_layout() {
        let p = TrackingScenario::reference_example().with_overrides(Some(3), Some(5), None).compile().unwrap().problem().unwrap();
        let u = rows(&p.zero_control());
        assert_eq!((u.len(), u[0].len()), (5, 3));
        assert_eq!(rows(&p.forward(&p.zero_control()).unwrap()).len(), 6);
    }
}
