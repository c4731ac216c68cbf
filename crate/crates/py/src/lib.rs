//! Python bindings: constraint models, force fields, particle and
//! mean-field integration, W1 distances, and the config-driven experiment
//! dispatcher.
//!
//! ```python
//! import tether_py as tp
//!
//! model = tp.ConstraintModel.shift("tanh", 1)
//! field = tp.ForceField("soft", mass=1.0)
//! out = tp.simulate(model, field, y0=[0.3], v0=[0.5],
//!                   particles=[[0.1], [-0.4]], t_end=1.0, dt=1e-3)
//! print(out["energies"][0], out["energies"][-1])
//! ```

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::conversion::IntoPyObjectExt;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use tether_core::cloud::{Distribution, WeightedPointCloud};
use tether_core::constraint::{self, AssumptionBounds, Coupling, SampleBox};
use tether_core::dynamics::{IntegrateOptions, Scheme, Trajectory};
use tether_core::harness::{self, RunOptions, Subcommand};
use tether_core::{particle, transport, CoreError, FlowState, SystemState};

fn core_err(e: CoreError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn dvec(values: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(values)
}

fn dmat(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(PyValueError::new_err("matrix rows must be nonempty and equal length"));
    }
    Ok(DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
}

fn mat_to_vec(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn points_from_py(points: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    points.iter().map(|p| dvec(p)).collect()
}

fn coupling_from_py(kind: &str, dim: usize, matrix: Option<Vec<Vec<f64>>>) -> PyResult<Coupling> {
    let c = match matrix {
        Some(rows) => dmat(&rows)?,
        None => DMatrix::identity(dim, dim),
    };
    match kind {
        "linear" => Ok(Coupling::Linear { c }),
        "tanh" => Ok(Coupling::Tanh { c }),
        other => Err(PyValueError::new_err(format!(
            "unknown coupling kind `{other}` (expected linear or tanh)"
        ))),
    }
}

/// Constraint function `g(X, y)` with the velocity-transfer map `Phi` and
/// curvature term `Omega`.
#[pyclass(name = "ConstraintModel", frozen)]
struct PyConstraintModel {
    inner: constraint::ConstraintModel,
}

#[pymethods]
impl PyConstraintModel {
    /// `g(X, y) = X - B y`.
    #[staticmethod]
    fn linear(b: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: constraint::ConstraintModel::linear(dmat(&b)?).map_err(core_err)?,
        })
    }

    /// `g(X, y) = X + c(y)` with `c` of the given coupling kind.
    #[staticmethod]
    #[pyo3(signature = (kind, dim, matrix = None))]
    fn shift(kind: &str, dim: usize, matrix: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        Ok(Self {
            inner: constraint::ConstraintModel::shift(coupling_from_py(kind, dim, matrix)?)
                .map_err(core_err)?,
        })
    }

    /// `g(X, y) = X + eps sin(X) + c(y)`, `|eps| < 1`.
    #[staticmethod]
    #[pyo3(signature = (eps, kind, dim, matrix = None))]
    fn warped(eps: f64, kind: &str, dim: usize, matrix: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        Ok(Self {
            inner: constraint::ConstraintModel::warped(eps, coupling_from_py(kind, dim, matrix)?)
                .map_err(core_err)?,
        })
    }

    #[getter]
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }

    #[getter]
    fn dim_y(&self) -> usize {
        self.inner.dim_y()
    }

    fn g(&self, x: Vec<f64>, y: Vec<f64>) -> Vec<f64> {
        self.inner.g(&dvec(&x), &dvec(&y)).iter().copied().collect()
    }

    /// `Phi(X, y)` as a nested list, row major.
    fn phi(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let phi = self.inner.eval_phi(&dvec(&x), &dvec(&y)).map_err(core_err)?;
        Ok(mat_to_vec(&phi))
    }

    /// `Omega(X, y)` as `omega[i][a][b]`.
    fn omega(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let omega = self.inner.eval_omega(&dvec(&x), &dvec(&y)).map_err(core_err)?;
        let (n0, n1, n2) = omega.shape();
        Ok((0..n0)
            .map(|i| {
                (0..n1)
                    .map(|a| (0..n2).map(|b| omega.get(i, a, b)).collect())
                    .collect()
            })
            .collect())
    }

    /// Samples the structural bounds over an axis-aligned box and reports
    /// the empirical estimates with pass flags.
    #[pyo3(signature = (x_lo, x_hi, y_lo, y_hi, n_samples = 256, seed = 0))]
    fn check_assumptions(
        &self,
        py: Python<'_>,
        x_lo: Vec<f64>,
        x_hi: Vec<f64>,
        y_lo: Vec<f64>,
        y_hi: Vec<f64>,
        n_samples: usize,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let sample_box = SampleBox {
            x_lo: dvec(&x_lo),
            x_hi: dvec(&x_hi),
            y_lo: dvec(&y_lo),
            y_hi: dvec(&y_hi),
        };
        let report = constraint::check_assumptions(
            &self.inner,
            &sample_box,
            n_samples,
            &AssumptionBounds::default(),
            seed,
        )
        .map_err(core_err)?;
        let value = serde_json::to_value(&report)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        json_to_py(py, &value)
    }
}

/// Potentials acting on the macroscopic component (`w0`) and particles
/// (`w1`), plus the particle mass.
#[pyclass(name = "ForceField", frozen)]
struct PyForceField {
    inner: tether_core::ForceField,
}

fn potential_kind(name: &str) -> PyResult<tether_core::PotentialKind> {
    match name {
        "harmonic" => Ok(tether_core::PotentialKind::Harmonic),
        "soft" => Ok(tether_core::PotentialKind::Soft),
        other => Err(PyValueError::new_err(format!(
            "unknown potential `{other}` (expected harmonic or soft)"
        ))),
    }
}

#[pymethods]
impl PyForceField {
    #[new]
    #[pyo3(signature = (name, mass, w0 = None, w1 = None))]
    fn new(name: &str, mass: f64, w0: Option<&str>, w1: Option<&str>) -> PyResult<Self> {
        let base = potential_kind(name)?;
        let w0 = w0.map(potential_kind).transpose()?.unwrap_or(base);
        let w1 = w1.map(potential_kind).transpose()?.unwrap_or(base);
        Ok(Self {
            inner: tether_core::ForceField::new(w0, w1, mass),
        })
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.particle_mass
    }

    /// `(F1(x), F0(y))`.
    fn forces(&self, x: Vec<f64>, y: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let (f1, f0) = self.inner.eval_forces(&dvec(&x), &dvec(&y));
        (f1.iter().copied().collect(), f0.iter().copied().collect())
    }
}

fn scheme_from_str(scheme: &str) -> PyResult<Scheme> {
    match scheme {
        "rk4" => Ok(Scheme::Rk4),
        "rk2" => Ok(Scheme::Rk2),
        other => Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
    }
}

fn trajectory_to_dict(py: Python<'_>, traj: &Trajectory) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("times", traj.times.clone())?;
    d.set_item(
        "ys",
        traj.ys.iter().map(|v| v.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "vs",
        traj.vs.iter().map(|v| v.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
    )?;
    d.set_item("energies", traj.energies.clone())?;
    d.set_item("constraint_drifts", traj.drifts.clone())?;
    d.set_item(
        "points",
        traj.snapshots
            .iter()
            .map(|snap| {
                snap.iter()
                    .map(|p| p.iter().copied().collect::<Vec<f64>>())
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>(),
    )?;
    d.set_item("weights", traj.weights.clone())?;
    Ok(d.into())
}

/// Integrates the N-particle system; returns a dict of recorded arrays.
#[pyfunction]
#[pyo3(signature = (model, field, y0, v0, particles, t_end, dt, scheme = "rk4", stride = 1))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    model: &PyConstraintModel,
    field: &PyForceField,
    y0: Vec<f64>,
    v0: Vec<f64>,
    particles: Vec<Vec<f64>>,
    t_end: f64,
    dt: f64,
    scheme: &str,
    stride: usize,
) -> PyResult<Py<PyDict>> {
    let init = SystemState::new(dvec(&y0), dvec(&v0), points_from_py(particles));
    let opts = IntegrateOptions::new(scheme_from_str(scheme)?, dt, t_end, stride);
    let traj = particle::integrate(&model.inner, &field.inner, &init, &opts).map_err(core_err)?;
    trajectory_to_dict(py, &traj)
}

/// Integrates the mean-field characteristic flow for a weighted cloud.
#[pyfunction]
#[pyo3(signature = (model, field, y0, v0, points, weights = None, t_end = 1.0, dt = 1e-3, scheme = "rk4", stride = 1))]
#[allow(clippy::too_many_arguments)]
fn mean_field_flow(
    py: Python<'_>,
    model: &PyConstraintModel,
    field: &PyForceField,
    y0: Vec<f64>,
    v0: Vec<f64>,
    points: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
    t_end: f64,
    dt: f64,
    scheme: &str,
    stride: usize,
) -> PyResult<Py<PyDict>> {
    let pts = points_from_py(points);
    let cloud = match weights {
        Some(w) => WeightedPointCloud::new(pts, w).map_err(core_err)?,
        None => WeightedPointCloud::empirical(pts).map_err(core_err)?,
    };
    let fs = FlowState::new(dvec(&y0), dvec(&v0), cloud);
    let opts = IntegrateOptions::new(scheme_from_str(scheme)?, dt, t_end, stride);
    let traj = tether_core::meanfield::integrate_flow(&model.inner, &field.inner, &fs, &opts)
        .map_err(core_err)?;
    trajectory_to_dict(py, &traj)
}

/// Total energy of a particle configuration.
#[pyfunction]
fn total_energy(
    model: &PyConstraintModel,
    field: &PyForceField,
    y: Vec<f64>,
    v: Vec<f64>,
    particles: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let state = SystemState::new(dvec(&y), dvec(&v), points_from_py(particles));
    particle::total_energy(&model.inner, &field.inner, &state).map_err(core_err)
}

fn cloud_from_py(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<WeightedPointCloud> {
    let pts = points_from_py(points);
    match weights {
        Some(w) => WeightedPointCloud::new(pts, w).map_err(core_err),
        None => WeightedPointCloud::empirical(pts).map_err(core_err),
    }
}

/// Exact 1D Monge-Kantorovich distance between weighted clouds.
#[pyfunction]
#[pyo3(signature = (a, b, a_weights = None, b_weights = None))]
fn w1_sorted_1d(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    a_weights: Option<Vec<f64>>,
    b_weights: Option<Vec<f64>>,
) -> PyResult<f64> {
    let ca = cloud_from_py(a, a_weights)?;
    let cb = cloud_from_py(b, b_weights)?;
    Ok(transport::w1_sorted_1d(&ca, &cb).map_err(core_err)?.value)
}

/// Exact assignment distance for equal-size uniform clouds; returns
/// `(value, matching)`.
#[pyfunction]
fn w1_assignment(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<(f64, Vec<usize>)> {
    let ca = cloud_from_py(a, None)?;
    let cb = cloud_from_py(b, None)?;
    let result = transport::w1_assignment(&ca, &cb).map_err(core_err)?;
    Ok((result.value, result.matching.unwrap_or_default()))
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_py_any(py)?,
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)?
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)?
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py)?,
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)?
        }
        serde_json::Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, v) in map {
                d.set_item(k, json_to_py(py, v)?)?;
            }
            d.into_py_any(py)?
        }
    })
}

/// Runs a config-driven experiment (`simulate`, `meanfield`, `consistency`,
/// `stability`, `convergence`, `invariants`), writes artifacts to
/// `out_dir`, and returns the manifest as a dict.
#[pyfunction]
#[pyo3(signature = (subcommand, config_toml, out_dir, seed = None, strict_sequential = true))]
fn run(
    py: Python<'_>,
    subcommand: &str,
    config_toml: &str,
    out_dir: &str,
    seed: Option<u64>,
    strict_sequential: bool,
) -> PyResult<Py<PyAny>> {
    let sub = match subcommand {
        "simulate" => Subcommand::Simulate,
        "meanfield" => Subcommand::Meanfield,
        "consistency" => Subcommand::Consistency,
        "stability" => Subcommand::Stability,
        "convergence" => Subcommand::Convergence,
        "invariants" => Subcommand::Invariants,
        other => {
            return Err(PyValueError::new_err(format!("unknown subcommand `{other}`")));
        }
    };
    let opts = RunOptions {
        out_dir: out_dir.into(),
        seed_override: seed,
        strict_sequential,
        dae_residuals: false,
    };
    let manifest = harness::dispatch(config_toml, sub, &opts).map_err(core_err)?;
    let value = serde_json::to_value(&manifest).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

/// Evaluates W1 between two cloud CSV files, like the CLI `w1` subcommand.
#[pyfunction]
#[pyo3(signature = (path_a, path_b, method = "auto"))]
fn w1_files(py: Python<'_>, path_a: &str, path_b: &str, method: &str) -> PyResult<Py<PyAny>> {
    let json = harness::run_w1(
        std::path::Path::new(path_a),
        std::path::Path::new(path_b),
        method,
        None,
    )
    .map_err(core_err)?;
    json_to_py(py, &json)
}

/// Deterministic midpoint-quantile cloud of a uniform box (1D or 2D).
#[pyfunction]
fn quantile_uniform_cloud(lo: Vec<f64>, hi: Vec<f64>, m_per_dim: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let cloud = Distribution::UniformBox { lo, hi }
        .quantile_cloud(m_per_dim)
        .map_err(core_err)?;
    Ok((
        cloud
            .points()
            .iter()
            .map(|p| p.iter().copied().collect())
            .collect(),
        cloud.weights().to_vec(),
    ))
}

/// Seeded iid sample from a uniform box, drawn through a labeled stream.
#[pyfunction]
#[pyo3(signature = (lo, hi, n, seed, label = "py/sample"))]
fn sample_uniform_cloud(
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: usize,
    seed: u64,
    label: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let mut rng = tether_core::rng::stream(seed, label);
    let cloud = Distribution::UniformBox { lo, hi }
        .sample(n, &mut rng)
        .map_err(core_err)?;
    Ok(cloud
        .points()
        .iter()
        .map(|p| p.iter().copied().collect())
        .collect())
}

#[pymodule]
fn tether_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConstraintModel>()?;
    m.add_class::<PyForceField>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(mean_field_flow, m)?)?;
    m.add_function(wrap_pyfunction!(total_energy, m)?)?;
    m.add_function(wrap_pyfunction!(w1_sorted_1d, m)?)?;
    m.add_function(wrap_pyfunction!(w1_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(w1_files, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_uniform_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(sample_uniform_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
