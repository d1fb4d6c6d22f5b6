//! Python bindings (`import pyeih`). Matrices cross the boundary as nested
//! lists, files as JSON strings.

use nalgebra::{Matrix3, Matrix4, Vector3};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use eih_calib::calibration::{self, Motion};
use eih_calib::camera::{self, PixelDepth};
use eih_calib::cli::{self, CliError};
use eih_calib::dataset::{Dataset, Method};
use eih_calib::ekf::FilterConfig;
use eih_calib::geometry::{self, EulerAngles, RotVec};
use eih_calib::measurement::MeasurementNoise;
use eih_calib::simulator::{self, Preset, ScenarioOptions};
use eih_calib::{evaluation, selftest};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Numerical(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn mat3(m: &Matrix3<f64>) -> Vec<Vec<f64>> {
    (0..3).map(|r| (0..3).map(|c| m[(r, c)]).collect()).collect()
}

fn to_mat3(rows: &[Vec<f64>]) -> PyResult<Matrix3<f64>> {
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
        return Err(PyValueError::new_err("expected a 3x3 nested list"));
    }
    Ok(Matrix3::from_fn(|r, c| rows[r][c]))
}

fn to_mat4(rows: &[Vec<f64>]) -> PyResult<Matrix4<f64>> {
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        return Err(PyValueError::new_err("expected a 4x4 nested list"));
    }
    Ok(Matrix4::from_fn(|r, c| rows[r][c]))
}

#[pyclass(name = "CameraIntrinsics", module = "pyeih", skip_from_py_object)]
#[derive(Clone)]
struct PyCameraIntrinsics(camera::CameraIntrinsics);

#[pymethods]
impl PyCameraIntrinsics {
    #[new]
    fn new(f: f64, mx: f64, my: f64, ox: f64, oy: f64) -> PyResult<Self> {
        camera::CameraIntrinsics::new(f, mx, my, ox, oy).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn default_sensor() -> Self {
        Self(simulator::default_intrinsics())
    }

    #[getter]
    fn fx(&self) -> f64 {
        self.0.fx()
    }

    #[getter]
    fn fy(&self) -> f64 {
        self.0.fy()
    }

    /// Camera-frame point (mm) to `(u, v, depth)`.
    fn project(&self, p: [f64; 3]) -> PyResult<(f64, f64, f64)> {
        let px = camera::project(&self.0, &Vector3::from(p)).map_err(value_err)?;
        Ok((px.u, px.v, px.z_c))
    }

    fn back_project(&self, u: f64, v: f64, depth: f64) -> PyResult<[f64; 3]> {
        camera::back_project(&self.0, &PixelDepth::new(u, v, depth)).map(Into::into).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        let k = &self.0;
        format!("CameraIntrinsics(f={}, mx={}, my={}, ox={}, oy={})", k.f, k.m_x, k.m_y, k.o_x, k.o_y)
    }
}

#[pyclass(name = "HomTransform", module = "pyeih", skip_from_py_object)]
#[derive(Clone)]
struct PyHomTransform(geometry::HomTransform);

#[pymethods]
impl PyHomTransform {
    #[new]
    #[pyo3(signature = (rotvec = [0.0; 3], t = [0.0; 3]))]
    fn new(rotvec: [f64; 3], t: [f64; 3]) -> Self {
        Self(geometry::HomTransform::from_rotvec(RotVec(rotvec.into()), t.into()))
    }

    #[staticmethod]
    fn from_matrix(m: Vec<Vec<f64>>) -> PyResult<Self> {
        geometry::HomTransform::from_matrix(&to_mat4(&m)?).map(Self).map_err(value_err)
    }

    #[getter]
    fn rotvec(&self) -> [f64; 3] {
        self.0.rot.to_rodrigues().0.into()
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        self.0.t.into()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        let m = self.0.matrix();
        (0..4).map(|r| (0..4).map(|c| m[(r, c)]).collect()).collect()
    }

    fn inverse(&self) -> Self {
        Self(geometry::invert(&self.0))
    }

    fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        self.0.apply(&Vector3::from(p)).into()
    }

    fn __mul__(&self, other: PyRef<'_, Self>) -> Self {
        Self(geometry::compose(&self.0, &other.0))
    }

    fn __repr__(&self) -> String {
        format!("HomTransform(rotvec={:?}, t={:?})", self.rotvec(), self.translation())
    }
}

#[pyfunction]
fn rodrigues_to_matrix(v: [f64; 3]) -> Vec<Vec<f64>> {
    mat3(geometry::rodrigues_to_rotmat(RotVec(v.into())).matrix())
}

#[pyfunction]
fn matrix_to_rodrigues(m: Vec<Vec<f64>>) -> PyResult<[f64; 3]> {
    geometry::rotmat_to_rodrigues(&to_mat3(&m)?).map(|v| v.0.into()).map_err(value_err)
}

/// `Rz(phi) · Ry(theta) · Rx(psi)`.
#[pyfunction]
fn euler_to_matrix(phi: f64, theta: f64, psi: f64) -> Vec<Vec<f64>> {
    mat3(geometry::euler_to_rotmat(EulerAngles::new(phi, theta, psi)).matrix())
}

#[pyfunction]
fn matrix_to_euler(m: Vec<Vec<f64>>) -> PyResult<(f64, f64, f64)> {
    let r = geometry::RotMat::new(to_mat3(&m)?).map_err(value_err)?;
    let a = r.to_euler();
    Ok((a.phi, a.theta, a.psi))
}

type Matrix = Vec<Vec<f64>>;

/// Closed-form `A X = X B` over `(A, B)` pairs of 4x4 relative motions.
/// Returns `(X, rotation_residual, translation_residual)`.
#[pyfunction]
fn solve_axxb(motions: Vec<(Matrix, Matrix)>) -> PyResult<(PyHomTransform, f64, f64)> {
    let ms = motions
        .iter()
        .map(|(a, b)| {
            let a = geometry::HomTransform::from_matrix(&to_mat4(a)?).map_err(value_err)?;
            let b = geometry::HomTransform::from_matrix(&to_mat4(b)?).map_err(value_err)?;
            Ok(Motion { a, b })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let r = calibration::solve_axxb(&ms).map_err(value_err)?;
    Ok((PyHomTransform(r.x), r.rot_residual, r.trans_residual))
}

/// Returns `(dataset_json, ground_truth_json)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, noise = 0.02, waypoints = 10, preset = "excited", survey = true))]
fn simulate(seed: u64, noise: f64, waypoints: usize, preset: &str, survey: bool) -> PyResult<(String, String)> {
    let preset = match preset {
        "excited" => Preset::Excited,
        "paper" => Preset::Paper,
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    };
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(PyValueError::new_err("noise must be a non-negative fraction of depth"));
    }
    let noise = (noise > 0.0).then_some(MeasurementNoise::DepthProportional { fraction: noise, floor_mm: 1.0 });
    let opts = ScenarioOptions { waypoints, preset, noise, survey, ..ScenarioOptions::default() };
    let s = simulator::scenario(seed, &opts).map_err(value_err)?;
    let (d, _) = simulator::render_dataset(&s).map_err(value_err)?;
    Ok((d.to_json(), s.ground_truth_file().to_json()))
}

/// Calibrates a dataset given as JSON; returns the result report as JSON.
#[pyfunction]
#[pyo3(signature = (dataset_json, method = "ekf", config_json = None))]
fn calibrate(dataset_json: &str, method: &str, config_json: Option<&str>) -> PyResult<String> {
    let method = match method {
        "ekf" => Method::Ekf,
        "batch" => Method::Batch,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    let d = Dataset::from_json(dataset_json).map_err(value_err)?;
    let cfg = match config_json {
        Some(c) => FilterConfig::from_json(c).map_err(value_err)?,
        None => FilterConfig::default(),
    };
    cli::calibrate(&d, method, &cfg).map(|r| r.to_json()).map_err(cli_err)
}

#[pyfunction]
fn paper_table(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let t = evaluation::paper_table_check();
    let out = PyDict::new(py);
    out.set_item("percent", t.vs_end_effector.percent.map(|p| p.unwrap_or(f64::NAN)))?;
    out.set_item("l2_mm", t.vs_end_effector.l2_mm)?;
    out.set_item("l2_vs_camera_actual_mm", t.vs_camera_actual.l2_mm)?;
    out.set_item("reproduced", t.reproduced)?;
    Ok(out)
}

/// `[(name, passed, worst), ...]`.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn run_selftest(seed: u64) -> Vec<(String, bool, f64)> {
    selftest::run_all(seed).into_iter().map(|c| (c.name.to_string(), c.passed, c.worst)).collect()
}

#[pymodule]
fn pyeih(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCameraIntrinsics>()?;
    m.add_class::<PyHomTransform>()?;
    m.add_function(wrap_pyfunction!(rodrigues_to_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_to_rodrigues, m)?)?;
    m.add_function(wrap_pyfunction!(euler_to_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_to_euler, m)?)?;
    m.add_function(wrap_pyfunction!(solve_axxb, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(paper_table, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    Ok(())
}
