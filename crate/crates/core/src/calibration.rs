//! Hand-eye transform estimation.
//!
//! Two routes produce a [`HandEyeResult`]:
//!
//! - [`extract_from_ekf`]: the filter's final camera pose against the final
//!   end-effector pose.
//! - [`solve_axxb`]: a closed-form batch solve of `A X = X B` over relative
//!   motions (rotation from log-vector alignment, then translation by linear
//!   least squares).
//!
//! Frame conventions for [`PosePair`]: `a` maps board coordinates into the
//! camera frame, `b` maps base coordinates into the end-effector frame. With
//! `A = A₂A₁⁻¹` and `B = B₂B₁⁻¹` the unknown of `A X = X B` maps
//! end-effector coordinates into the camera frame; [`hand_eye_from_pairs`]
//! inverts it so that every `HandEyeResult::x` maps camera coordinates into
//! the end-effector frame.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::geometry::{compose, invert, HomTransform, Pose6, RotMat, RotVec};
use crate::measurement::{to_camera_points, CameraPoint, MeasurementError};

/// Minimum angle between two relative-rotation axes for the batch solve.
pub const MIN_AXIS_SEPARATION: f64 = 1e-3;

/// Relative rotations smaller than this carry no usable axis.
const MIN_MOTION_ANGLE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("degenerate motion set: {0}")]
    DegenerateMotion(String),
    #[error("waypoint {waypoint}: {message}")]
    BoardPose { waypoint: u64, message: String },
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    /// Board → camera.
    pub a: HomTransform,
    /// Base → end-effector.
    pub b: HomTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub a: HomTransform,
    pub b: HomTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandEyeResult {
    pub x: HomTransform,
    pub rot_residual: f64,
    pub trans_residual: f64,
    pub pairs_used: usize,
}

/// `A = A_{i+1} A_i⁻¹`, `B = B_{i+1} B_i⁻¹` over consecutive pairs.
pub fn relative_motions(pairs: &[PosePair]) -> Result<Vec<Motion>, CalibrationError> {
    if pairs.len() < 2 {
        return Err(CalibrationError::TooFew { what: "pose pairs", needed: 2, got: pairs.len() });
    }
    Ok(pairs
        .windows(2)
        .map(|w| Motion { a: compose(&w[1].a, &invert(&w[0].a)), b: compose(&w[1].b, &invert(&w[0].b)) })
        .collect())
}

/// Largest angle between the rotation axes of any two motions, treating
/// axes as undirected lines.
fn axis_spread(axes: &[Vector3<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in axes.iter().enumerate() {
        for b in &axes[i + 1..] {
            let c = a.dot(b).abs().min(1.0);
            let s = a.cross(b).norm();
            best = best.max(s.atan2(c));
        }
    }
    best
}

fn nearest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>, CalibrationError> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(CalibrationError::Numerical("SVD did not converge".into())),
    };
    let d = (u * v_t).determinant().signum();
    Ok(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t)
}

/// Closed-form `A X = X B`.
pub fn solve_axxb(motions: &[Motion]) -> Result<HandEyeResult, CalibrationError> {
    if motions.len() < 2 {
        return Err(CalibrationError::TooFew { what: "relative motions", needed: 2, got: motions.len() });
    }
    let logs: Vec<(Vector3<f64>, Vector3<f64>)> =
        motions.iter().map(|m| (m.a.rot.to_rodrigues().0, m.b.rot.to_rodrigues().0)).collect();
    let axes: Vec<Vector3<f64>> =
        logs.iter().filter(|(a, _)| a.norm() > MIN_MOTION_ANGLE).map(|(a, _)| a.normalize()).collect();
    if axes.len() < 2 {
        return Err(CalibrationError::DegenerateMotion(format!(
            "only {} of {} motions rotate; rotation axes are unconstrained so the \
             translation is unobservable (trajectory lacks rotational excitation)",
            axes.len(),
            motions.len()
        )));
    }
    let spread = axis_spread(&axes);
    if spread <= MIN_AXIS_SEPARATION {
        return Err(CalibrationError::DegenerateMotion(format!(
            "all rotation axes are parallel (max separation {spread:.3e} rad ≤ {MIN_AXIS_SEPARATION} rad)"
        )));
    }

    // a_i = R_X b_i in the least-squares sense.
    let m: Matrix3<f64> = logs.iter().map(|(a, b)| a * b.transpose()).sum();
    let r_x = nearest_rotation(&m)?;

    let n = motions.len();
    let mut lhs = DMatrix::zeros(3 * n, 3);
    let mut rhs = DVector::zeros(3 * n);
    for (i, mo) in motions.iter().enumerate() {
        let ra = mo.a.rot.matrix();
        lhs.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&(ra - Matrix3::identity()));
        rhs.fixed_rows_mut::<3>(3 * i).copy_from(&(r_x * mo.b.t - mo.a.t));
    }
    let t_x: Vector3<f64> = lhs
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| CalibrationError::Numerical(e.to_string()))?
        .fixed_rows::<3>(0)
        .into_owned();

    let rot_sq: f64 = logs.iter().map(|(a, b)| (a - r_x * b).norm_squared()).sum();
    let trans_sq = (&lhs * DVector::from_column_slice(t_x.as_slice()) - &rhs).norm_squared();
    Ok(HandEyeResult {
        x: HomTransform::new(RotMat::from_matrix_unchecked(r_x), t_x),
        rot_residual: (rot_sq / n as f64).sqrt(),
        trans_residual: (trans_sq / n as f64).sqrt(),
        pairs_used: n,
    })
}

/// Batch hand-eye from per-waypoint pose pairs; `x` maps camera
/// coordinates into the end-effector frame.
pub fn hand_eye_from_pairs(pairs: &[PosePair]) -> Result<HandEyeResult, CalibrationError> {
    let motions = relative_motions(pairs)?;
    let mut r = solve_axxb(&motions)?;
    r.x = invert(&r.x);
    Ok(r)
}

/// `X = T_base_ee⁻¹ · T_base_cam`.
pub fn extract_from_ekf(final_camera_pose: &Pose6, final_ee_pose: &Pose6) -> HandEyeResult {
    HandEyeResult {
        x: compose(&invert(&final_ee_pose.to_transform()), &final_camera_pose.to_transform()),
        rot_residual: 0.0,
        trans_residual: 0.0,
        pairs_used: 1,
    }
}

/// `(α, β, γ, t_x, t_y, t_z)` → `[Rodrigues(α, β, γ) t; 0 1]`.
pub fn assemble_extrinsic(state_tail: [f64; 6]) -> HomTransform {
    let [a, b, g, x, y, z] = state_tail;
    HomTransform::from_rotvec(RotVec::new(a, b, g), Vector3::new(x, y, z))
}

/// Least-squares rigid transform `T` with `observed ≈ T · reference`.
pub fn fit_rigid(reference: &[Vector3<f64>], observed: &[Vector3<f64>]) -> Result<HomTransform, String> {
    if reference.len() != observed.len() {
        return Err("point sets differ in length".into());
    }
    if reference.len() < 3 {
        return Err(format!("need at least 3 common points, got {}", reference.len()));
    }
    let n = reference.len() as f64;
    let pc: Vector3<f64> = reference.iter().sum::<Vector3<f64>>() / n;
    let qc: Vector3<f64> = observed.iter().sum::<Vector3<f64>>() / n;
    let h: Matrix3<f64> = reference.iter().zip(observed).map(|(p, q)| (p - pc) * (q - qc).transpose()).sum();
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    if sv[1] <= 1e-9 * sv[0].max(1.0) {
        return Err("points are collinear".into());
    }
    let (u, v_t) = (svd.u.ok_or("SVD failed")?, svd.v_t.ok_or("SVD failed")?);
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Ok(HomTransform::new(RotMat::from_matrix_unchecked(r), qc - r * pc))
}

/// Builds pose pairs from a dataset: the board pose per waypoint comes from
/// a rigid fit of the observed camera points against the board survey, or
/// against the first frame when no survey exists.
pub fn pairs_from_dataset(dataset: &Dataset) -> Result<Vec<PosePair>, CalibrationError> {
    let frames = dataset.frames();
    let ee = dataset.ee_poses();
    let points: Vec<Vec<CameraPoint>> =
        frames.iter().map(|f| to_camera_points(&dataset.intrinsics, f)).collect::<Result<_, _>>()?;

    let reference: Vec<(u32, Vector3<f64>)> = if dataset.board.is_empty() {
        points.first().map(|f| f.iter().map(|c| (c.id, c.p)).collect()).unwrap_or_default()
    } else {
        dataset.board.iter().map(|b| (b.id, Vector3::from(b.p_mm))).collect()
    };

    frames
        .iter()
        .zip(points.iter().zip(&ee))
        .map(|(f, (pts, ee_pose))| {
            let (r, o): (Vec<_>, Vec<_>) =
                pts.iter().filter_map(|c| reference.iter().find(|(id, _)| *id == c.id).map(|(_, p)| (*p, c.p))).unzip();
            let a = fit_rigid(&r, &o)
                .map_err(|message| CalibrationError::BoardPose { waypoint: f.waypoint_index, message })?;
            Ok(PosePair { a, b: invert(&ee_pose.to_transform()) })
        })
        .collect()
}
