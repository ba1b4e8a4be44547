//! Python bindings: `import mmfem`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use mmfem_core::analysis;
use mmfem_core::benchmarks::{self, CaseRun, Overrides};
use mmfem_core::config::{Method, ProblemConfig};
use mmfem_core::io::{self, CutSpec};
use mmfem_core::stabilization;
use mmfem_core::verify::{self, VerifyOptions};
use mmfem_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Singular { .. } | Error::Breakdown { .. } | Error::NonFinite(_) | Error::DegenerateElement { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips a serializable value through `json.loads` to get plain dicts and lists.
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(to_py)
}

/// Problem configuration.
#[pyclass(name = "Config", module = "mmfem", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ProblemConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = ProblemConfig::from_toml(text).map_err(to_py)?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Configuration of a catalog benchmark with optional overrides.
    #[staticmethod]
    #[pyo3(signature = (id, method = "mmad", subcase = 0, pe = None, da = None, mesh = None))]
    fn benchmark(
        id: &str,
        method: &str,
        subcase: usize,
        pe: Option<f64>,
        da: Option<f64>,
        mesh: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let case = benchmarks::find_case(id).map_err(to_py)?;
        let ov = Overrides { subcase: Some(subcase), pe, da, mesh, ..Default::default() };
        let inner = benchmarks::resolve_config(&case, parse_method(method)?, &ov).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Manufactured-solution problem `prod sin(pi x_d)`.
    #[staticmethod]
    #[pyo3(signature = (mesh, pe, da, velocity, method = "mmad"))]
    fn manufactured(mesh: Vec<usize>, pe: f64, da: f64, velocity: Vec<f64>, method: &str) -> PyResult<Self> {
        let inner = ProblemConfig::manufactured_problem(
            mesh,
            pe,
            da,
            mmfem_core::Velocity::Constant(velocity),
            parse_method(method)?,
        );
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &self.inner)
    }

    #[getter]
    fn pe(&self) -> f64 {
        self.inner.pe
    }

    #[getter]
    fn da(&self) -> f64 {
        self.inner.da
    }

    #[getter]
    fn mesh(&self) -> Vec<usize> {
        self.inner.mesh.clone()
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.name()
    }

    #[setter]
    fn set_method(&mut self, name: &str) -> PyResult<()> {
        self.inner.method = parse_method(name)?;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(mesh={:?}, pe={:e}, da={:e}, method={})",
            self.inner.mesh,
            self.inner.pe,
            self.inner.da,
            self.inner.method.name()
        )
    }
}

/// Result of one solve.
#[pyclass(name = "Solution", module = "mmfem")]
struct PySolution {
    run: CaseRun,
}

#[pymethods]
impl PySolution {
    /// Nodal values of the primary field, lexicographic in `x` then `y`.
    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.run.solution.phi.clone()
    }

    /// Nodal micromorphic field, `None` for Galerkin.
    #[getter]
    fn g(&self) -> Option<Vec<Vec<f64>>> {
        let dim = self.run.mesh.dim();
        self.run.solution.g.as_ref().map(|g| g.iter().map(|v| v[..dim].to_vec()).collect())
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.run.mesh.nodes().iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn unknowns(&self) -> usize {
        self.run.solve.unknowns
    }

    #[getter]
    fn dofs_per_node(&self) -> usize {
        self.run.solve.unknowns / self.run.mesh.num_nodes()
    }

    #[getter]
    fn relative_residual(&self) -> f64 {
        self.run.solve.relative_residual
    }

    #[getter]
    fn wall_time(&self) -> f64 {
        self.run.wall_time()
    }

    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig { inner: self.run.config.clone() }
    }

    /// Error norms as a dict, or `None` when no reference is available.
    fn errors(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &self.run.errors)
    }

    fn oscillation(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &self.run.oscillation)
    }

    /// `phi` at a point of the domain.
    #[pyo3(signature = (x, y = 0.0))]
    fn value(&self, x: f64, y: f64) -> PyResult<f64> {
        Ok(self.run.solution.eval(&self.run.mesh, [x, y]).map_err(to_py)?.phi)
    }

    /// Samples along a line cut (`"h:0.5"`, `"v:0.25"` or `"diag"`) as
    /// `(s, x, y, phi)` tuples.
    #[pyo3(signature = (spec, interpolate = false))]
    fn cut(&self, spec: &str, interpolate: bool) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let spec: CutSpec = spec.parse().map_err(to_py)?;
        let samples = io::cut_samples(&self.run.solution, &self.run.mesh, spec, interpolate).map_err(to_py)?;
        Ok(samples.into_iter().map(|c| (c.s, c.x, c.y, c.phi)).collect())
    }

    fn to_csv(&self) -> PyResult<String> {
        io::field_csv(&self.run.solution, &self.run.mesh).map_err(to_py)
    }

    fn to_vtk(&self) -> PyResult<String> {
        io::field_vtk(&self.run.solution, &self.run.mesh).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Solution({}, unknowns={})", self.run.config.method.name(), self.run.solve.unknowns)
    }
}

/// Solves a configuration. With `reference_refinement`, 2D error norms are
/// measured against a refined MMAD solve.
#[pyfunction]
#[pyo3(signature = (config, reference_refinement = None))]
fn solve(py: Python<'_>, config: &PyConfig, reference_refinement: Option<usize>) -> PyResult<PySolution> {
    let cfg = config.inner.clone();
    let run = py.detach(|| benchmarks::run_config("python", &cfg, reference_refinement)).map_err(to_py)?;
    Ok(PySolution { run })
}

/// Identifiers of the benchmark catalog.
#[pyfunction]
fn catalog() -> Vec<String> {
    benchmarks::catalog().into_iter().map(|c| c.id).collect()
}

/// Galerkin and MMAD side by side on a benchmark, as a dict.
#[pyfunction]
#[pyo3(signature = (id, subcase = 0, repeats = 1))]
fn compare(py: Python<'_>, id: &str, subcase: usize, repeats: usize) -> PyResult<Py<PyAny>> {
    let ov = Overrides { subcase: Some(subcase), ..Default::default() };
    let cmp = py.detach(|| benchmarks::compare_methods(id, &ov, repeats)).map_err(to_py)?;
    to_object(py, &cmp)
}

/// Closed-form 1D solution with homogeneous Dirichlet ends.
#[pyfunction]
fn exact_1d(pe: f64, da: f64, u: f64, f: f64, x: f64) -> PyResult<f64> {
    analysis::exact_1d(pe, da, u, f, x).map_err(to_py)
}

#[pyfunction]
fn gamma(alpha: f64) -> PyResult<f64> {
    stabilization::gamma(alpha).map_err(to_py)
}

#[pyfunction]
fn kc_bar(u: Vec<f64>, h: Vec<f64>, pe: f64) -> PyResult<f64> {
    stabilization::kc_bar(&u, &h, pe).map_err(to_py)
}

#[pyfunction]
fn kr_bar(pe: f64, da: f64, h: f64) -> PyResult<f64> {
    stabilization::kr_bar(pe, da, h).map_err(to_py)
}

/// Least-squares slope of `log(error)` against `log(h)`.
#[pyfunction]
fn convergence_rate(errors: Vec<f64>, hs: Vec<f64>) -> PyResult<f64> {
    analysis::convergence_rate(&errors, &hs).map_err(to_py)
}

/// Runs the property checks and returns them as a list of dicts.
#[pyfunction]
#[pyo3(signature = (trials = 100, seed = 2024, mesh = 40))]
fn run_checks(py: Python<'_>, trials: usize, seed: u64, mesh: usize) -> PyResult<Py<PyAny>> {
    let checks = py.detach(|| verify::run_checks(&VerifyOptions { trials, seed, mesh })).map_err(to_py)?;
    to_object(py, &checks)
}

#[pymodule]
fn mmfem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(exact_1d, m)?)?;
    m.add_function(wrap_pyfunction!(gamma, m)?)?;
    m.add_function(wrap_pyfunction!(kc_bar, m)?)?;
    m.add_function(wrap_pyfunction!(kr_bar, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
