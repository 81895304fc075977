//! Python bindings. Fields cross the boundary as flat row-major lists of
//! floats; controls as one flat list of `n_steps * nx * ny` values.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use chemoopt::verify::{run_invariant_suite, CheckStatus};
use chemoopt::{
    evaluate_with_gradient, gradient_check, optimize, parse_config_in, solve_forward, Control,
    Error, ProblemSpec, Termination,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. }
        | Error::InvalidArgument(_)
        | Error::InvalidGrid(_)
        | Error::ShapeMismatch(_)
        | Error::EmptyMask(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Uniform cell-centered grid on `[0, lx] x [0, ly]`.
#[pyclass(name = "Grid", module = "chemoopt_py", frozen)]
struct PyGrid {
    inner: chemoopt::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (nx, ny, lx = 1.0, ly = 1.0))]
    fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> PyResult<Self> {
        let inner = chemoopt::Grid::uniform(nx, ny, lx, ly).map_err(to_py)?;
        Ok(PyGrid { inner })
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx()
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.ny()
    }

    #[getter]
    fn hx(&self) -> f64 {
        self.inner.hx()
    }

    #[getter]
    fn hy(&self) -> f64 {
        self.inner.hy()
    }

    /// Discrete Neumann Laplacian of a field.
    fn laplacian(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        let g = &self.inner;
        let f = g.field(values).map_err(to_py)?;
        Ok(g.laplacian(&f).map_err(to_py)?.values().to_vec())
    }

    /// Conservative discretization of `div(u grad v)`.
    fn chemotaxis(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        let g = &self.inner;
        let u = g.field(u).map_err(to_py)?;
        let v = g.field(v).map_err(to_py)?;
        Ok(g.chemotaxis_divergence(&u, &v)
            .map_err(to_py)?
            .values()
            .to_vec())
    }

    /// Cell-area weighted sum.
    fn integrate(&self, values: Vec<f64>) -> PyResult<f64> {
        let g = &self.inner;
        let f = g.field(values).map_err(to_py)?;
        g.integrate(&f, None).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!(
            "Grid(nx={}, ny={}, lx={}, ly={})",
            g.nx(),
            g.ny(),
            g.lx(),
            g.ly()
        )
    }
}

/// A validated control problem built from a JSON configuration.
#[pyclass(name = "Problem", module = "chemoopt_py", frozen)]
struct PyProblem {
    spec: ProblemSpec,
}

impl PyProblem {
    fn control(&self, values: Option<Vec<f64>>) -> PyResult<Control> {
        match values {
            None => Ok(self.spec.f_init.clone()),
            Some(v) => Control::from_values(&self.spec.params, v).map_err(to_py),
        }
    }
}

#[pymethods]
impl PyProblem {
    /// Parses a configuration document; relative file paths resolve
    /// against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir = "."))]
    fn from_json(text: &str, base_dir: &str) -> PyResult<Self> {
        let spec = parse_config_in(text, &PathBuf::from(base_dir)).map_err(to_py)?;
        Ok(PyProblem { spec })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(PathBuf::from).unwrap_or_default();
        let spec = parse_config_in(&text, &base).map_err(to_py)?;
        Ok(PyProblem { spec })
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.spec.params.grid.clone(),
        }
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.spec.params.time.n_steps()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.spec.params.time.dt()
    }

    /// Initial control from the configuration, flattened.
    #[getter]
    fn initial_control(&self) -> Vec<f64> {
        self.spec.f_init.values().to_vec()
    }

    /// Solves the state system. Returns a dict with `u`, `v` (one list per
    /// time level), `mass`, `min_u`, `min_v` and `dt_limit`.
    #[pyo3(signature = (control = None))]
    fn forward<'py>(
        &self,
        py: Python<'py>,
        control: Option<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = self.control(control)?;
        let traj = py
            .detach(|| solve_forward(&self.spec.params, &f))
            .map_err(to_py)?;
        let out = PyDict::new(py);
        let levels = |fs: &[chemoopt::ScalarField]| -> Vec<Vec<f64>> {
            fs.iter().map(|x| x.values().to_vec()).collect()
        };
        out.set_item("u", levels(&traj.u))?;
        out.set_item("v", levels(&traj.v))?;
        let d = &traj.diagnostics;
        out.set_item("mass", d.mass.clone())?;
        out.set_item("min_u", d.min_u.clone())?;
        out.set_item("min_v", d.min_v.clone())?;
        out.set_item("dt_limit", d.dt_limit.clone())?;
        out.set_item("warnings", d.warnings.clone())?;
        Ok(out)
    }

    /// Objective parts and reduced gradient at a control.
    #[pyo3(signature = (control = None))]
    fn gradient<'py>(
        &self,
        py: Python<'py>,
        control: Option<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = self.control(control)?;
        let s = &self.spec;
        let eval = py
            .detach(|| evaluate_with_gradient(&s.params, &f, &s.weights, &s.desired))
            .map_err(to_py)?;
        let out = PyDict::new(py);
        let o = &eval.objective;
        out.set_item("objective", o.total)?;
        out.set_item("tracking_u", o.tracking_u)?;
        out.set_item("tracking_v", o.tracking_v)?;
        out.set_item("cost_f", o.cost_f)?;
        out.set_item("gradient", eval.gradient.values.clone())?;
        Ok(out)
    }

    /// Runs the projected gradient method from the configured start.
    fn optimize<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.spec;
        let report = py
            .detach(|| {
                optimize(
                    &s.params,
                    &s.weights,
                    &s.desired,
                    &s.admissible,
                    &s.f_init,
                    &s.optimizer,
                )
            })
            .map_err(to_py)?;
        let out = PyDict::new(py);
        let termination = match report.termination {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFailed => "line_search_failed",
        };
        out.set_item("termination", termination)?;
        out.set_item("iterations", report.iterations)?;
        out.set_item("objective", report.objective.total)?;
        out.set_item("control", report.control.values().to_vec())?;
        out.set_item("j_history", report.j_history)?;
        out.set_item("residual_history", report.residual_history)?;
        out.set_item("step_sizes", report.step_sizes)?;
        Ok(out)
    }

    /// Worst best-epsilon relative error of the adjoint directional
    /// derivative against central differences, plus per-direction rows.
    fn gradcheck<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.spec;
        let report = py
            .detach(|| {
                gradient_check(
                    &s.params,
                    &s.f_init,
                    &s.weights,
                    &s.desired,
                    s.gradcheck_directions,
                    &s.gradcheck_eps,
                    s.seed,
                )
            })
            .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("worst_error", report.worst_error())?;
        let rows: Vec<(f64, f64, f64)> = report
            .directions
            .iter()
            .map(|d| (d.adjoint_derivative, d.best_eps, d.best_relative_error))
            .collect();
        out.set_item("directions", rows)?;
        Ok(out)
    }

    /// Invariant suite as `(name, status, detail)` tuples.
    fn verify(&self, py: Python<'_>) -> PyResult<Vec<(String, String, String)>> {
        let results = py
            .detach(|| run_invariant_suite(&self.spec))
            .map_err(to_py)?;
        Ok(results
            .into_iter()
            .map(|r| {
                let status = match r.status {
                    CheckStatus::Pass => "PASS",
                    CheckStatus::Fail => "FAIL",
                    CheckStatus::Skip => "SKIP",
                };
                (r.name.to_string(), status.to_string(), r.detail)
            })
            .collect())
    }
}

#[pymodule]
fn chemoopt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyProblem>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
