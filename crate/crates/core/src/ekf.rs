//! EKF-SLAM over the camera pose and the marker map.
//!
//! The state is `[x, y, z, phi, theta, psi, m1x, m1y, m1z, ..., mkx, mky, mkz]`.
//! The pose block is the camera *body* frame; the optical frame used by the
//! depth camera is the body frame re-axed by [`AXIS_PERMUTATION`], so that a
//! landmark `m` observed from pose `(t, R)` reads
//!
//! ```text
//! h(pose, m) = P · Rᵀ · (m − t)
//! ```
//!
//! The motion model is the identity (`G = I`) with an additive control
//! input derived from consecutive end-effector waypoints.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::fit_rigid;
use crate::dataset::{Dataset, TransformRecord};
use crate::geometry::{
    compose, invert, normalize_angle, rot_x, rot_y, rot_z, EulerAngles, HomTransform, Pose6, RotMat,
};
use crate::measurement::{
    noise_covariance, to_camera_points, CameraPoint, FrameObservations, MeasurementError, MeasurementNoise, NoiseModel,
};

pub const POSE_DIM: usize = 6;

/// Optical axes expressed in the body frame, one per row: optical x is body
/// −x, optical y is body −z and the optical axis is body −y.
pub const AXIS_PERMUTATION: [[f64; 3]; 3] = [[-1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 0.0]];

/// Landmark Jacobian printed for the zero-angle case, kept for comparison.
/// Its determinant is −1, so it cannot be the Jacobian of a rigid map; the
/// proper rotation closest to it is [`AXIS_PERMUTATION`].
pub const PUBLISHED_LANDMARK_JACOBIAN: [[f64; 3]; 3] = [[-1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]];

/// Ceiling on the innovation covariance condition number.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Angle increments above this (rad) break the rigid-mount odometry
/// assumption badly enough to be worth a warning.
pub const LARGE_ROTATION_STEP: f64 = 0.1;

pub fn axis_permutation() -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| AXIS_PERMUTATION[r][c])
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkfError {
    #[error("covariance is not symmetric positive semi-definite (asymmetry {asymmetry:.3e}, min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { asymmetry: f64, min_eigenvalue: f64 },
    #[error("landmark {0} is already in the state")]
    DuplicateLandmark(u32),
    #[error("landmark {id}: innovation covariance is singular (condition number {condition:.3e})")]
    SingularInnovation { id: u32, condition: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dataset needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint {waypoint}: {source}")]
    AtWaypoint {
        waypoint: u64,
        #[source]
        source: Box<EkfError>,
    },
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error("invalid filter config: {0}")]
    Config(String),
}

/// Symmetry and definiteness diagnostics of a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceHealth {
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub trace: f64,
}

impl CovarianceHealth {
    pub fn of(cov: &DMatrix<f64>) -> Self {
        let asymmetry = (cov - cov.transpose()).amax();
        let sym = (cov + cov.transpose()) * 0.5;
        let min_eigenvalue = sym.symmetric_eigenvalues().min();
        Self { asymmetry, min_eigenvalue, trace: cov.trace() }
    }

    /// Max asymmetry below `1e-9 · trace` and min eigenvalue above `−1e-8 · trace`.
    pub fn is_healthy(&self) -> bool {
        let scale = self.trace.abs().max(1.0);
        self.asymmetry <= 1e-9 * scale && self.min_eigenvalue >= -1e-8 * scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    ids: Vec<u32>,
    index: BTreeMap<u32, usize>,
}

impl EkfState {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn landmark_count(&self) -> usize {
        self.ids.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn pose(&self) -> Pose6 {
        let m = &self.mean;
        Pose6::from_array([m[0], m[1], m[2], m[3], m[4], m[5]])
    }

    pub fn pose_cov(&self) -> Matrix6<f64> {
        self.cov.fixed_view::<6, 6>(0, 0).into_owned()
    }

    /// Landmark ids in state-block order.
    pub fn landmark_ids(&self) -> &[u32] {
        &self.ids
    }

    /// State offset of the landmark block for `id`.
    pub fn landmark_offset(&self, id: u32) -> Option<usize> {
        self.index.get(&id).map(|slot| POSE_DIM + 3 * slot)
    }

    pub fn landmark(&self, id: u32) -> Option<Vector3<f64>> {
        self.landmark_offset(id).map(|o| self.mean.fixed_rows::<3>(o).into_owned())
    }

    pub fn landmark_cov(&self, id: u32) -> Option<Matrix3<f64>> {
        self.landmark_offset(id).map(|o| self.cov.fixed_view::<3, 3>(o, o).into_owned())
    }

    pub fn health(&self) -> CovarianceHealth {
        CovarianceHealth::of(&self.cov)
    }

    /// Optical-frame camera pose in the base frame.
    pub fn camera_transform(&self) -> HomTransform {
        body_to_camera(&self.pose())
    }

    fn normalize_pose_angles(&mut self) {
        for i in 3..6 {
            self.mean[i] = normalize_angle(self.mean[i]);
        }
    }

    fn symmetrize(&mut self) {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        self.cov = sym;
    }
}

/// Camera optical frame for a body pose: `(R · Pᵀ, t)`.
pub fn body_to_camera(body: &Pose6) -> HomTransform {
    let r = body.angles.to_rotmat();
    HomTransform::new(RotMat::from_matrix_unchecked(r.matrix() * axis_permutation().transpose()), body.t)
}

/// Body pose for an optical-frame camera transform: angles of `R_cam · P`.
pub fn camera_to_body(cam: &HomTransform) -> Pose6 {
    let r = RotMat::from_matrix_unchecked(cam.rot.matrix() * axis_permutation());
    Pose6::new(cam.t, r.to_euler())
}

fn check_psd(m: &DMatrix<f64>) -> Result<(), EkfError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(EkfError::NonFinite("covariance"));
    }
    let h = CovarianceHealth::of(m);
    if !h.is_healthy() {
        return Err(EkfError::NotPsd { asymmetry: h.asymmetry, min_eigenvalue: h.min_eigenvalue });
    }
    Ok(())
}

pub fn init_state(first_pose: &Pose6, pose_cov: &Matrix6<f64>) -> Result<EkfState, EkfError> {
    if !first_pose.is_finite() {
        return Err(EkfError::NonFinite("initial pose"));
    }
    let cov = DMatrix::from_fn(POSE_DIM, POSE_DIM, |r, c| pose_cov[(r, c)]);
    check_psd(&cov)?;
    let mut s = EkfState {
        mean: DVector::from_row_slice(&first_pose.to_array()),
        cov,
        ids: Vec::new(),
        index: BTreeMap::new(),
    };
    s.normalize_pose_angles();
    Ok(s)
}

/// Appends a landmark block with zero cross-covariance.
pub fn add_landmark(
    s: &EkfState,
    id: u32,
    p_world: &Vector3<f64>,
    init_cov: &Matrix3<f64>,
) -> Result<EkfState, EkfError> {
    if s.index.contains_key(&id) {
        return Err(EkfError::DuplicateLandmark(id));
    }
    if p_world.iter().chain(init_cov.iter()).any(|v| !v.is_finite()) {
        return Err(EkfError::NonFinite("landmark"));
    }
    let n = s.dim();
    let mut mean = s.mean.clone().resize_vertically(n + 3, 0.0);
    mean.fixed_rows_mut::<3>(n).copy_from(p_world);
    let mut cov = s.cov.clone().resize(n + 3, n + 3, 0.0);
    cov.fixed_view_mut::<3, 3>(n, n).copy_from(init_cov);

    let mut ids = s.ids.clone();
    let mut index = s.index.clone();
    index.insert(id, ids.len());
    ids.push(id);
    Ok(EkfState { mean, cov, ids, index })
}

/// `[I₆ | 0₆ₓ₃ₖ]`.
pub fn lift_matrix(k: usize) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(POSE_DIM, POSE_DIM + 3 * k);
    f.fixed_view_mut::<6, 6>(0, 0).fill_with_identity();
    f
}

/// Pose increment applied by the identity motion model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryDelta {
    pub dt: Vector3<f64>,
    pub dangles: EulerAngles,
}

impl OdometryDelta {
    /// `to − from`, with angle differences wrapped.
    pub fn between(from: &Pose6, to: &Pose6) -> Self {
        let a = from.angles;
        let b = to.angles;
        Self {
            dt: to.t - from.t,
            dangles: EulerAngles::new(b.phi - a.phi, b.theta - a.theta, b.psi - a.psi).normalized(),
        }
    }
}

/// Control noise `Σ_control` in (mm², rad²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionNoise(Matrix6<f64>);

impl MotionNoise {
    pub fn new(m: Matrix6<f64>) -> Result<Self, EkfError> {
        check_psd(&DMatrix::from_fn(6, 6, |r, c| m[(r, c)]))?;
        Ok(Self(m))
    }

    pub fn from_diag(d: [f64; 6]) -> Result<Self, EkfError> {
        Self::new(Matrix6::from_diagonal(&Vector6::from(d)))
    }

    pub fn zero() -> Self {
        Self(Matrix6::zeros())
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }
}

/// `μ̄ = μ + Fᵀu`, `Σ̄ = GΣGᵀ + FᵀΣ_control F` with `G = I`.
pub fn predict(s: &EkfState, u: &OdometryDelta, q: &MotionNoise) -> EkfState {
    let mut out = s.clone();
    let a = u.dangles;
    let delta = [u.dt.x, u.dt.y, u.dt.z, a.phi, a.theta, a.psi];
    for (i, d) in delta.iter().enumerate() {
        out.mean[i] += d;
    }
    out.normalize_pose_angles();
    let mut block = out.cov.fixed_view_mut::<6, 6>(0, 0);
    block += q.matrix();
    out.symmetrize();
    out
}

/// Predicted optical-frame measurement of world point `m` from `pose`.
pub fn measure_h(pose: &Pose6, m_world: &Vector3<f64>) -> Vector3<f64> {
    let r = pose.angles.to_rotmat();
    axis_permutation() * (r.matrix().transpose() * (m_world - pose.t))
}

/// World point that `measure_h` maps to `z`.
pub fn inverse_h(pose: &Pose6, z: &Vector3<f64>) -> Vector3<f64> {
    let r = pose.angles.to_rotmat();
    r.matrix() * (axis_permutation().transpose() * z) + pose.t
}

/// Analytic Jacobians of [`measure_h`] with respect to the pose and the
/// landmark.
pub fn jacobian_h(pose: &Pose6, m_world: &Vector3<f64>) -> (Matrix3x6<f64>, Matrix3<f64>) {
    let EulerAngles { phi, theta, psi } = pose.angles;
    let (rz, ry, rx) = (rot_z(phi), rot_y(theta), rot_x(psi));
    let p = axis_permutation();
    let d = m_world - pose.t;

    let (sz, cz) = phi.sin_cos();
    let (sy, cy) = theta.sin_cos();
    let (sx, cx) = psi.sin_cos();
    let drz = Matrix3::new(-sz, -cz, 0.0, cz, -sz, 0.0, 0.0, 0.0, 0.0);
    let dry = Matrix3::new(-sy, 0.0, cy, 0.0, 0.0, 0.0, -cy, 0.0, -sy);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sx, -cx, 0.0, cx, -sx);

    let h_l = p * (rz * ry * rx).transpose();
    let mut h_p = Matrix3x6::zeros();
    h_p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-h_l));
    let partials = [drz * ry * rx, rz * dry * rx, rz * ry * drx];
    for (j, dr) in partials.iter().enumerate() {
        h_p.set_column(3 + j, &(p * (dr.transpose() * d)));
    }
    (h_p, h_l)
}

/// The printed pose Jacobian, term by term, with `(x, y, z) = m_rel`.
/// Diagnostic only; the filter uses [`jacobian_h`].
pub fn published_jacobian_hp(pose: &Pose6, m_rel: &Vector3<f64>) -> Matrix3x6<f64> {
    let EulerAngles { phi, theta, psi } = pose.angles;
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    let (x, y, z) = (m_rel.x, m_rel.y, m_rel.z);

    let hp00 = sf * ct * x + (sf * st * sp + cp * cf) * y + (sf * cp * st - cf * sp) * z;
    let hp01 = cf * st * x - cf * ct * sp * y - cf * cp * ct * z;
    let hp02 = -ct * y - ct * z;
    let hp10 = 0.0;
    let hp11 = ct * x + st * sp * y + st * cp * z;
    let hp12 = -ct * cp * y + ct * sp * z;
    let hp20 = ct * cf * x - (sf * cp - cf * st * sp) * y + (cp * cf * st + sf * sp) * z;
    let hp21 = -st * sf * x + sf * ct * sp * y + cp * sf * ct * z;
    let hp22 = (-cf * sp + sf * st * cp) * y - (sp * sf * st + cf * cp) * z;

    Matrix3x6::new(1.0, 0.0, 0.0, hp00, hp01, hp02, 0.0, 1.0, 0.0, hp10, hp11, hp12, 0.0, 0.0, 1.0, hp20, hp21, hp22)
}

/// Side-by-side of the printed and the analytic pose Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianComparison {
    pub analytic: Matrix3x6<f64>,
    pub published: Matrix3x6<f64>,
    pub frobenius_diff: f64,
    pub max_abs_diff: f64,
}

pub fn compare_pose_jacobians(pose: &Pose6, m_world: &Vector3<f64>) -> JacobianComparison {
    let (analytic, _) = jacobian_h(pose, m_world);
    let published = published_jacobian_hp(pose, &(m_world - pose.t));
    let diff = analytic - published;
    JacobianComparison { analytic, published, frobenius_diff: diff.norm(), max_abs_diff: diff.amax() }
}

fn condition_number(s: &Matrix3<f64>) -> f64 {
    let ev = s.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn correct_landmark(s: &mut EkfState, id: u32, z: &Vector3<f64>, q: &Matrix3<f64>) -> Result<(), EkfError> {
    let n = s.dim();
    let off = s.landmark_offset(id).expect("landmark present");
    let pose = s.pose();
    let m = s.mean.fixed_rows::<3>(off).into_owned();
    let (h_p, h_l) = jacobian_h(&pose, &m);

    let mut h = DMatrix::zeros(3, n);
    h.fixed_view_mut::<3, 6>(0, 0).copy_from(&h_p);
    h.fixed_view_mut::<3, 3>(0, off).copy_from(&h_l);

    let ph_t = &s.cov * h.transpose();
    let innovation_cov: Matrix3<f64> = (&h * &ph_t).fixed_view::<3, 3>(0, 0).into_owned() + q;
    let innovation_cov = (innovation_cov + innovation_cov.transpose()) * 0.5;
    let condition = condition_number(&innovation_cov);
    if condition.is_nan() || condition > MAX_INNOVATION_CONDITION {
        return Err(EkfError::SingularInnovation { id, condition });
    }
    let s_inv = innovation_cov.try_inverse().ok_or(EkfError::SingularInnovation { id, condition })?;
    let s_inv = DMatrix::from_fn(3, 3, |r, c| s_inv[(r, c)]);
    let gain = ph_t * s_inv;

    let nu = z - measure_h(&pose, &m);
    let nu = DVector::from_column_slice(nu.as_slice());
    s.mean += &gain * nu;
    s.normalize_pose_angles();

    // Joseph form: (I − KH) Σ (I − KH)ᵀ + K Q Kᵀ
    let q_d = DMatrix::from_fn(3, 3, |r, c| q[(r, c)]);
    let i_kh = DMatrix::identity(n, n) - &gain * &h;
    s.cov = &i_kh * &s.cov * i_kh.transpose() + &gain * q_d * gain.transpose();
    s.symmetrize();
    if s.mean.iter().any(|v| !v.is_finite()) {
        return Err(EkfError::NonFinite("state mean"));
    }
    Ok(())
}

/// Sequential EKF correction for one frame, in ascending landmark id.
///
/// Unseen landmarks are initialised through [`inverse_h`] at the current
/// pose with covariance `H_l⁻¹ Q H_l⁻ᵀ · landmark_cov_inflation`.
pub fn update(
    s: &EkfState,
    frame: &[CameraPoint],
    noise: &MeasurementNoise,
    landmark_cov_inflation: f64,
) -> Result<EkfState, EkfError> {
    let mut order: Vec<&CameraPoint> = frame.iter().collect();
    order.sort_by_key(|c| c.id);
    let mut out = s.clone();
    for obs in order {
        if obs.p.iter().any(|v| !v.is_finite()) {
            return Err(EkfError::NonFinite("measurement"));
        }
        let q = noise_covariance(&noise.model_at(obs.p.z));
        if out.index.contains_key(&obs.id) {
            correct_landmark(&mut out, obs.id, &obs.p, &q)?;
        } else {
            let pose = out.pose();
            let (_, h_l) = jacobian_h(&pose, &Vector3::zeros());
            let h_l_inv = h_l.transpose();
            let init_cov = h_l_inv * q * h_l_inv.transpose() * landmark_cov_inflation;
            let init_cov = (init_cov + init_cov.transpose()) * 0.5;
            out = add_landmark(&out, obs.id, &inverse_h(&pose, &obs.p), &init_cov)?;
        }
    }
    Ok(out)
}

/// Filter settings; JSON keys match the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Fixed per-axis measurement sigma; when absent the sigma is 2 % of
    /// depth with a 1 mm floor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_xyz_mm: Option<[f64; 3]>,
    pub motion_noise_diag: [f64; 6],
    pub init_pose_cov_diag: [f64; 6],
    pub landmark_cov_inflation: f64,
    /// Nominal camera mount used to seed the first camera pose.
    pub mount_prior: TransformRecord,
    /// Seed the first camera pose from a rigid fit of the first frame to
    /// the board survey (needs 3 or more surveyed markers in view).
    pub board_init: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let deg = 0.1f64.to_radians();
        Self {
            sigma_xyz_mm: None,
            motion_noise_diag: [1.0, 1.0, 1.0, deg * deg, deg * deg, deg * deg],
            init_pose_cov_diag: [2500.0, 2500.0, 2500.0, 2.5e-3, 2.5e-3, 2.5e-3],
            landmark_cov_inflation: 10.0,
            mount_prior: TransformRecord::from(&nominal_mount_rotation()),
            board_init: true,
        }
    }
}

/// Camera mounted with the optical frame re-axed by the axis permutation
/// and no translation offset.
pub fn nominal_mount_rotation() -> HomTransform {
    HomTransform::new(RotMat::from_matrix_unchecked(axis_permutation().transpose()), Vector3::zeros())
}

impl FilterConfig {
    pub fn from_json(s: &str) -> Result<Self, EkfError> {
        let c: FilterConfig = serde_json::from_str(s).map_err(|e| EkfError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), EkfError> {
        self.measurement_noise()?;
        self.motion_noise()?;
        if self.init_pose_cov_diag.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EkfError::Config("init_pose_cov_diag must be finite and ≥ 0".into()));
        }
        if !(self.landmark_cov_inflation.is_finite() && self.landmark_cov_inflation > 0.0) {
            return Err(EkfError::Config("landmark_cov_inflation must be positive".into()));
        }
        self.mount_prior.to_transform().map_err(|e| EkfError::Config(format!("mount_prior: {e}")))?;
        Ok(())
    }

    pub fn measurement_noise(&self) -> Result<MeasurementNoise, EkfError> {
        match self.sigma_xyz_mm {
            None => Ok(MeasurementNoise::default()),
            Some([a, b, c]) => Ok(MeasurementNoise::Fixed(NoiseModel::new(a, b, c)?)),
        }
    }

    pub fn motion_noise(&self) -> Result<MotionNoise, EkfError> {
        if self.motion_noise_diag.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EkfError::Config("motion_noise_diag must be finite and ≥ 0".into()));
        }
        MotionNoise::from_diag(self.motion_noise_diag)
    }
}

/// Everything [`run_filter`] produces.
#[derive(Debug, Clone)]
pub struct FilterRun {
    /// Posterior state after each waypoint.
    pub states: Vec<EkfState>,
    /// Prior state after each predict, one per waypoint after the first.
    pub predicted: Vec<EkfState>,
    /// Optical-frame camera pose in the base frame after each waypoint.
    pub camera_poses: Vec<HomTransform>,
    pub waypoint_indices: Vec<u64>,
    pub final_camera: Pose6,
    pub warnings: Vec<String>,
}

impl FilterRun {
    pub fn final_state(&self) -> &EkfState {
        self.states.last().expect("run has states")
    }
}

/// Control input for the camera body between two waypoints.
///
/// The camera pose predicted for waypoint `i + 1` is the new end-effector
/// pose composed with the hand-eye transform implied by the current
/// estimate; for translation-only steps this is exactly the end-effector
/// displacement.
pub fn camera_odometry(current_body: &Pose6, ee_from: &Pose6, ee_to: &Pose6) -> OdometryDelta {
    let cam = body_to_camera(current_body);
    let hand_eye = compose(&invert(&ee_from.to_transform()), &cam);
    let predicted = camera_to_body(&compose(&ee_to.to_transform(), &hand_eye));
    OdometryDelta::between(current_body, &predicted)
}

fn at_waypoint(waypoint: u64) -> impl Fn(EkfError) -> EkfError {
    move |e| EkfError::AtWaypoint { waypoint, source: Box::new(e) }
}

/// Runs predict/update over every waypoint of `dataset`.
///
/// Surveyed board markers enter the state before the first update with
/// their stated sigma; any other marker is initialised on first sighting.
pub fn run_filter(dataset: &Dataset, config: &FilterConfig) -> Result<FilterRun, EkfError> {
    config.validate()?;
    let n = dataset.waypoints.len();
    if n < 2 {
        return Err(EkfError::TooFewWaypoints(n));
    }
    let noise = config.measurement_noise()?;
    let motion = config.motion_noise()?;
    let mount = config.mount_prior.to_transform().map_err(|e| EkfError::Config(e.to_string()))?;
    let ee = dataset.ee_poses();
    let frames = dataset.frames();
    let mut warnings = Vec::new();

    let mut first_cam = compose(&ee[0].to_transform(), &mount);
    if config.board_init {
        if let Some(fit) = board_fit(dataset, &frames[0]) {
            first_cam = fit;
        }
    }
    let pose_cov = Matrix6::from_diagonal(&Vector6::from(config.init_pose_cov_diag));
    let mut state = init_state(&camera_to_body(&first_cam), &pose_cov)?;
    let mut board = dataset.board.clone();
    board.sort_by_key(|b| b.id);
    for b in &board {
        let cov = Matrix3::identity() * (b.sigma_mm * b.sigma_mm);
        state = add_landmark(&state, b.id, &Vector3::from(b.p_mm), &cov)?;
    }
    if board.is_empty() {
        let msg = "no board survey in dataset: map is anchored to the mount prior, \
                   so the hand-eye translation reflects the prior";
        warn!("{msg}");
        warnings.push(msg.to_string());
    }

    let mut states = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n - 1);
    let mut camera_poses = Vec::with_capacity(n);
    for (i, frame) in frames.iter().enumerate() {
        let wrap = at_waypoint(frame.waypoint_index);
        if i > 0 {
            let raw = OdometryDelta::between(&ee[i - 1], &ee[i]);
            if raw.dangles.max_abs() > LARGE_ROTATION_STEP {
                let msg = format!(
                    "waypoint {}: end-effector rotation step {:.3} rad exceeds {LARGE_ROTATION_STEP} rad",
                    frame.waypoint_index,
                    raw.dangles.max_abs()
                );
                warn!("{msg}");
                warnings.push(msg);
            }
            let u = camera_odometry(&state.pose(), &ee[i - 1], &ee[i]);
            state = predict(&state, &u, &motion);
            predicted.push(state.clone());
        }
        let points = to_camera_points(&dataset.intrinsics, frame).map_err(EkfError::from).map_err(&wrap)?;
        state = update(&state, &points, &noise, config.landmark_cov_inflation).map_err(&wrap)?;
        camera_poses.push(state.camera_transform());
        states.push(state.clone());
    }

    let final_camera = camera_poses.last().expect("non-empty").to_pose();
    Ok(FilterRun {
        states,
        predicted,
        camera_poses,
        waypoint_indices: dataset.waypoints.iter().map(|w| w.index).collect(),
        final_camera,
        warnings,
    })
}

/// Camera pose from the surveyed markers seen in one frame.
fn board_fit(dataset: &Dataset, frame: &FrameObservations) -> Option<HomTransform> {
    let points = to_camera_points(&dataset.intrinsics, frame).ok()?;
    let (world, cam): (Vec<_>, Vec<_>) = points
        .iter()
        .filter_map(|c| {
            let b = dataset.board.iter().find(|b| b.id == c.id)?;
            Some((Vector3::from(b.p_mm), c.p))
        })
        .unzip();
    let world_to_cam = fit_rigid(&world, &cam).ok()?;
    Some(invert(&world_to_cam))
}
