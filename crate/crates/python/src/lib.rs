//! Python module `spectral_control`.
//!
//! Positions are lists of coordinate rows, matrices are lists of rows, and
//! structured results (reports, verification) are returned as plain dicts.

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use spectral_core::gradient::{self, ControllerParams};
use spectral_core::nalgebra::DMatrix;
use spectral_core::network::{self, PowerChain, WeightedAdjacency};
use spectral_core::report::{write_trajectory_csv, RunReport};
use spectral_core::schema::ScenarioFile;
use spectral_core::verify::{self, VerifyOptions};
use spectral_core::{Error, Metric, RobotConfiguration as CoreConfiguration, TargetSpectrum};

create_exception!(spectral_control, SpectralError, PyValueError);
create_exception!(spectral_control, UnrealizableError, SpectralError);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Unrealizable { .. } => UnrealizableError::new_err(err.to_string()),
        other => SpectralError::new_err(other.to_string()),
    }
}

fn metric(z: u8) -> PyResult<Metric> {
    Metric::try_from(z).map_err(SpectralError::new_err)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(PyModule::import(py, "json")?.call_method1("loads", (text,))?.unbind())
}

/// Positions of `n` robots in `d` dimensions.
#[pyclass(name = "RobotConfiguration", module = "spectral_control", from_py_object)]
#[derive(Clone)]
struct PyConfiguration {
    inner: CoreConfiguration,
}

#[pymethods]
impl PyConfiguration {
    #[new]
    fn new(positions: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: CoreConfiguration::from_rows(&positions).map_err(to_py)?,
        })
    }

    /// Uniform random configuration on the unit cube.
    #[staticmethod]
    fn random(n: usize, d: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: spectral_core::scenarios::random_geometric_config(n, d, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (side_length=1.0, d=2))]
    fn hexagon(side_length: f64, d: usize) -> PyResult<Self> {
        Ok(Self {
            inner: spectral_core::scenarios::hexagon_formation(side_length, d).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn positions(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    fn centroid(&self) -> Vec<f64> {
        self.inner.centroid()
    }

    fn translated(&self, offset: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.translated(&offset).map_err(to_py)?,
        })
    }

    /// New robot `i` is old robot `perm[i]`.
    fn permuted(&self, perm: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.permuted(&perm).map_err(to_py)?,
        })
    }

    fn contracted(&self, alpha: f64) -> Self {
        Self {
            inner: self.inner.contracted(alpha),
        }
    }

    #[pyo3(signature = (c=1.0, z=1))]
    fn adjacency(&self, c: f64, z: u8) -> PyResult<Vec<Vec<f64>>> {
        let adj = network::build_adjacency(&self.inner, c, metric(z)?).map_err(to_py)?;
        Ok(rows(adj.matrix()))
    }

    /// Moments `m_1..m_s` of the adjacency matrix, computed in canonical
    /// robot order so relabelings give identical values.
    #[pyo3(signature = (s, c=1.0, z=1))]
    fn moments(&self, s: usize, c: f64, z: u8) -> PyResult<Vec<f64>> {
        Ok(network::configuration_moments(&self.inner, c, metric(z)?, s)
            .map_err(to_py)?
            .into_vec())
    }

    /// Adjacency eigenvalues, largest first.
    #[pyo3(signature = (c=1.0, z=1))]
    fn eigenvalues(&self, c: f64, z: u8) -> PyResult<Vec<f64>> {
        let adj = network::build_adjacency(&self.inner, c, metric(z)?).map_err(to_py)?;
        Ok(network::eigenvalues(&adj))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("RobotConfiguration({:?})", self.inner.to_rows())
    }
}

fn params(c: f64, z: u8, s: usize, epsilon: Option<f64>) -> PyResult<ControllerParams> {
    let p = ControllerParams::new(c, metric(z)?, s);
    Ok(match epsilon {
        Some(e) => p.with_epsilon(e),
        None => p,
    })
}

fn targets(moments: Vec<f64>) -> PyResult<TargetSpectrum> {
    TargetSpectrum::new(moments, None).map_err(to_py)
}

fn weights(matrix: Vec<Vec<f64>>) -> PyResult<WeightedAdjacency> {
    let n = matrix.len();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(SpectralError::new_err("weight matrix must be square"));
    }
    WeightedAdjacency::from_matrix(DMatrix::from_fn(n, n, |i, j| matrix[i][j])).map_err(to_py)
}

/// Moments from eigenvalues: `m_k = sum(lambda^k) / n`.
#[pyfunction]
fn moments_from_eigenvalues(eigenvalues: Vec<f64>, s: usize) -> PyResult<Vec<f64>> {
    Ok(network::moments_from_eigenvalues(&eigenvalues, s).map_err(to_py)?.into_vec())
}

/// `[A^k]_ij` by exhaustive enumeration of walks.
#[pyfunction]
fn walk_weight_sum(weights_matrix: Vec<Vec<f64>>, k: usize, i: usize, j: usize) -> PyResult<f64> {
    network::walk_weight_sum(&weights(weights_matrix)?, k, i, j).map_err(to_py)
}

/// `[A^k]_ij` from the dense power chain.
#[pyfunction]
fn matrix_power_entry(weights_matrix: Vec<Vec<f64>>, k: usize, i: usize, j: usize) -> PyResult<f64> {
    let w = weights(weights_matrix)?;
    let chain = PowerChain::new(&w, k.max(1)).map_err(to_py)?;
    Ok(chain.entry(k, i, j))
}

/// `d tr(A^k) / d a_ij` for symmetric perturbations, `i != j`.
#[pyfunction]
fn trace_derivative(weights_matrix: Vec<Vec<f64>>, k: usize, i: usize, j: usize) -> PyResult<f64> {
    gradient::trace_derivative(&weights(weights_matrix)?, k, i, j).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (config, target_moments, c=1.0, z=1))]
fn cost(config: &PyConfiguration, target_moments: Vec<f64>, c: f64, z: u8) -> PyResult<f64> {
    let s = target_moments.len();
    gradient::cost(&config.inner, &targets(target_moments)?, &params(c, z, s, None)?).map_err(to_py)
}

/// `u = -grad f_s` as an `n x d` list of rows.
#[pyfunction]
#[pyo3(signature = (config, target_moments, c=1.0, z=1))]
fn control_law(config: &PyConfiguration, target_moments: Vec<f64>, c: f64, z: u8) -> PyResult<Vec<Vec<f64>>> {
    let s = target_moments.len();
    let u = gradient::control_law(&config.inner, &targets(target_moments)?, &params(c, z, s, None)?)
        .map_err(to_py)?;
    Ok(rows(u.matrix()))
}

/// `dm_k / dx` as an `n x d` list of rows.
#[pyfunction]
#[pyo3(signature = (config, k, c=1.0, z=1))]
fn moment_gradient(config: &PyConfiguration, k: usize, c: f64, z: u8) -> PyResult<Vec<Vec<f64>>> {
    let g = gradient::moment_gradient(&config.inner, &params(c, z, k, None)?, k).map_err(to_py)?;
    Ok(rows(&g))
}

#[pyfunction]
#[pyo3(signature = (config, target_moments, epsilon, c=1.0, z=1))]
fn barrier(config: &PyConfiguration, target_moments: Vec<f64>, epsilon: f64, c: f64, z: u8) -> PyResult<f64> {
    let s = target_moments.len();
    gradient::barrier(&config.inner, &targets(target_moments)?, &params(c, z, s, Some(epsilon))?)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (config, target_moments, epsilon, c=1.0, z=1))]
fn barrier_gradient(
    config: &PyConfiguration,
    target_moments: Vec<f64>,
    epsilon: f64,
    c: f64,
    z: u8,
) -> PyResult<Vec<Vec<f64>>> {
    let s = target_moments.len();
    let g = gradient::barrier_gradient(&config.inner, &targets(target_moments)?, &params(c, z, s, Some(epsilon))?)
        .map_err(to_py)?;
    Ok(rows(&g))
}

/// A scenario in file form; edit it with `with_overrides` and run it with
/// `simulate`.
#[pyclass(name = "Scenario", module = "spectral_control")]
struct PyScenario {
    file: ScenarioFile,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            file: ScenarioFile::from_json(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self {
            file: ScenarioFile::preset(name).map_err(to_py)?,
        })
    }

    /// Targets from a random formation, start from another seed rearranged
    /// into the formation's ordering of robots.
    #[staticmethod]
    #[pyo3(signature = (n, d, s, formation_seed, start_seed, z=1))]
    fn round_trip(n: usize, d: usize, s: usize, formation_seed: u64, start_seed: u64, z: u8) -> PyResult<Self> {
        Ok(Self {
            file: ScenarioFile::round_trip(n, d, s, metric(z)?, formation_seed, start_seed).map_err(to_py)?,
        })
    }

    /// Copy with `key=value` overrides applied, e.g. `["s=4"]`.
    fn with_overrides(&self, overrides: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            file: self.file.with_overrides(&overrides).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.file.name.clone()
    }

    fn to_json(&self) -> String {
        self.file.to_json_pretty()
    }

    /// Validates the scenario; raises with every violation listed.
    fn validate(&self) -> PyResult<()> {
        self.build().map(|_| ())
    }

    /// Target moments after validation (formations are evaluated).
    fn target_moments(&self) -> PyResult<Vec<f64>> {
        Ok(self.build()?.targets.moments().to_vec())
    }

    fn simulate(&self, py: Python<'_>) -> PyResult<Trajectory> {
        let scenario = self.build()?;
        let record = py
            .detach(|| spectral_core::simulate(&scenario))
            .map_err(to_py)?;
        let report = RunReport::new(&scenario, &record);
        Ok(Trajectory { record, report })
    }
}

impl PyScenario {
    fn build(&self) -> PyResult<spectral_core::Scenario> {
        self.file.clone().into_scenario().map_err(|violations| {
            let text = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            if violations.iter().all(|v| v.is_unrealizable()) {
                UnrealizableError::new_err(text)
            } else {
                SpectralError::new_err(text)
            }
        })
    }
}

/// Result of `Scenario.simulate()`.
#[pyclass(module = "spectral_control")]
struct Trajectory {
    record: spectral_core::TrajectoryRecord,
    report: RunReport,
}

#[pymethods]
impl Trajectory {
    /// `"converged"`, `"horizon"` or `"stalled"`.
    #[getter]
    fn termination(&self) -> String {
        self.record.termination.to_string()
    }

    #[getter]
    fn final_moments(&self) -> Vec<f64> {
        self.record.final_moments.values().to_vec()
    }

    #[getter]
    fn final_eigenvalues(&self) -> Vec<f64> {
        self.record.final_eigenvalues.clone()
    }

    #[getter]
    fn final_positions(&self) -> Vec<Vec<f64>> {
        self.record.final_configuration.to_rows()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.record.samples.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn costs(&self) -> Vec<f64> {
        self.record.samples.iter().map(|s| s.cost).collect()
    }

    #[getter]
    fn barriers(&self) -> Vec<f64> {
        self.record.samples.iter().map(|s| s.barrier).collect()
    }

    /// Moment vectors of the recorded samples.
    #[getter]
    fn moments(&self) -> Vec<Vec<f64>> {
        self.record.samples.iter().map(|s| s.moments.values().to_vec()).collect()
    }

    #[getter]
    fn ordering_violations(&self) -> usize {
        self.record.ordering_violations
    }

    /// The run report as a dict.
    fn report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_to_py(py, &self.report.to_json_pretty())
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        write_trajectory_csv(std::io::BufWriter::new(file), &self.record)
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }
}

/// Runs the oracle suite and returns its report as a dict with an extra
/// `passed` key.
#[pyfunction]
#[pyo3(name = "verify", signature = (n=5, d=2, trials=20, seed=0))]
fn run_verify(py: Python<'_>, n: usize, d: usize, trials: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let report = py
        .detach(|| verify::run(&VerifyOptions { n, d, trials, seed, fault: None }))
        .map_err(to_py)?;
    let dict = json_to_py(py, &report.to_json_pretty())?;
    dict.bind(py).set_item("passed", report.passed())?;
    Ok(dict)
}

#[pymodule]
fn spectral_control(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SpectralError", m.py().get_type::<SpectralError>())?;
    m.add("UnrealizableError", m.py().get_type::<UnrealizableError>())?;
    m.add_class::<PyConfiguration>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(moments_from_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(walk_weight_sum, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_power_entry, m)?)?;
    m.add_function(wrap_pyfunction!(trace_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(cost, m)?)?;
    m.add_function(wrap_pyfunction!(control_law, m)?)?;
    m.add_function(wrap_pyfunction!(moment_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(barrier, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add("PRESETS", spectral_core::scenarios::PRESETS.to_vec())?;
    Ok(())
}
