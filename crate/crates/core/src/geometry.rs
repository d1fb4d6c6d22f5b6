//! Rigid-body primitives: Euler and axis-angle rotations, 6-DoF poses and
//! homogeneous transforms.
//!
//! Conventions used everywhere in the crate:
//!
//! - Euler angles `(phi, theta, psi)` build `R = Rz(phi) * Ry(theta) * Rx(psi)`.
//! - Translations are millimetres, angles radians.
//! - A [`HomTransform`] `T_a_b` maps coordinates expressed in frame `b` into
//!   frame `a`: `p_a = R * p_b + t`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3};
use thiserror::Error;

/// Orthonormality tolerance for matrices coming from outside the crate.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// Below this angle the axis-angle map uses its first-order expansion.
const SMALL_ANGLE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a rotation: |RᵀR - I| = {orthogonality:.3e}, det = {det:.9}")]
    NotARotation { orthogonality: f64, det: f64 },
    #[error("homogeneous transform bottom row must be [0 0 0 1], got {0:?}")]
    BadBottomRow([f64; 4]),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = a.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(0.5 * (m[(2, 1)] - m[(1, 2)]), 0.5 * (m[(0, 2)] - m[(2, 0)]), 0.5 * (m[(1, 0)] - m[(0, 1)]))
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Z-Y-X Euler angles: `phi` about z, `theta` about y, `psi` about x.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles {
    pub const fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.phi, self.theta, self.psi]
    }

    pub fn normalized(self) -> Self {
        Self::new(normalize_angle(self.phi), normalize_angle(self.theta), normalize_angle(self.psi))
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.theta.is_finite() && self.psi.is_finite()
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.phi.abs().max(self.theta.abs()).max(self.psi.abs())
    }

    pub fn to_rotmat(self) -> RotMat {
        euler_to_rotmat(self)
    }
}

/// Axis-angle rotation vector: direction is the axis, norm the angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotVec(pub Vector3<f64>);

impl RotVec {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_rotmat(self) -> RotMat {
        rodrigues_to_rotmat(self)
    }
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotMat(Matrix3<f64>);

impl RotMat {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `m` against [`ORTHONORMAL_TOL`].
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        check_rotation(&m)?;
        Ok(Self(m))
    }

    /// Wraps a matrix the caller already knows to be a rotation.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Angle of the rotation in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let c = 0.5 * (self.0.trace() - 1.0);
        let s = vee(&self.0).norm();
        s.atan2(c)
    }

    pub fn to_rodrigues(&self) -> RotVec {
        log_so3(&self.0)
    }

    pub fn to_euler(&self) -> EulerAngles {
        rotmat_to_euler(self)
    }
}

impl Mul for RotMat {
    type Output = RotMat;
    fn mul(self, rhs: RotMat) -> RotMat {
        RotMat(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for RotMat {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

fn check_rotation(m: &Matrix3<f64>) -> Result<(), GeometryError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("rotation matrix"));
    }
    let orthogonality = (m.transpose() * m - Matrix3::identity()).norm();
    let det = m.determinant();
    if orthogonality > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(GeometryError::NotARotation { orthogonality, det });
    }
    Ok(())
}

/// 6-DoF pose: translation in mm and Z-Y-X Euler angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6 {
    pub t: Vector3<f64>,
    pub angles: EulerAngles,
}

impl Default for Pose6 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6 {
    pub fn new(t: Vector3<f64>, angles: EulerAngles) -> Self {
        Self { t, angles }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), EulerAngles::default())
    }

    pub fn is_finite(&self) -> bool {
        self.t.iter().all(|v| v.is_finite()) && self.angles.is_finite()
    }

    pub fn to_transform(&self) -> HomTransform {
        HomTransform::new(self.angles.to_rotmat(), self.t)
    }

    /// Packs as `[x, y, z, phi, theta, psi]`.
    pub fn to_array(&self) -> [f64; 6] {
        let a = self.angles;
        [self.t.x, self.t.y, self.t.z, a.phi, a.theta, a.psi]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), EulerAngles::new(v[3], v[4], v[5]))
    }
}

/// Rigid transform `[R t; 0 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomTransform {
    pub rot: RotMat,
    pub t: Vector3<f64>,
}

impl Default for HomTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl HomTransform {
    pub fn new(rot: RotMat, t: Vector3<f64>) -> Self {
        Self { rot, t }
    }

    pub fn identity() -> Self {
        Self::new(RotMat::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(RotMat::identity(), t)
    }

    pub fn from_rotvec(r: RotVec, t: Vector3<f64>) -> Self {
        Self::new(r.to_rotmat(), t)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::BadBottomRow(bottom));
        }
        let rot = RotMat::new(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        if t.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("translation"));
        }
        Ok(Self::new(rot, t))
    }

    pub fn to_pose(&self) -> Pose6 {
        Pose6::new(self.t, self.rot.to_euler())
    }

    pub fn inverse(&self) -> Self {
        invert(self)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        apply(self, p)
    }
}

impl Mul for HomTransform {
    type Output = HomTransform;
    fn mul(self, rhs: HomTransform) -> HomTransform {
        compose(&self, &rhs)
    }
}

impl Mul for &HomTransform {
    type Output = HomTransform;
    fn mul(self, rhs: &HomTransform) -> HomTransform {
        compose(self, rhs)
    }
}

pub fn euler_to_rotmat(a: EulerAngles) -> RotMat {
    RotMat(rot_z(a.phi) * rot_y(a.theta) * rot_x(a.psi))
}

/// Inverse of [`euler_to_rotmat`]; returns `theta` in `[-π/2, π/2]`.
/// At gimbal lock (`|cos theta| ≈ 0`) `psi` is set to zero.
pub fn rotmat_to_euler(r: &RotMat) -> EulerAngles {
    let m = r.matrix();
    let c_theta = m[(0, 0)].hypot(m[(1, 0)]);
    let theta = (-m[(2, 0)]).atan2(c_theta);
    if c_theta > 1e-12 {
        EulerAngles::new(m[(1, 0)].atan2(m[(0, 0)]), theta, m[(2, 1)].atan2(m[(2, 2)]))
    } else {
        EulerAngles::new((-m[(0, 1)]).atan2(m[(1, 1)]), theta, 0.0)
    }
}

/// Rodrigues formula `R = I + sin θ K + (1 - cos θ) K²`, `K = skew(v / θ)`.
pub fn rodrigues_to_rotmat(v: RotVec) -> RotMat {
    let theta = v.0.norm();
    if theta < SMALL_ANGLE {
        return RotMat(Matrix3::identity() + skew(&v.0));
    }
    let k = skew(&(v.0 / theta));
    let (s, c) = theta.sin_cos();
    RotMat(Matrix3::identity() + k * s + k * k * (1.0 - c))
}

/// Axis-angle vector of a rotation; errors if `m` is not orthonormal.
pub fn rotmat_to_rodrigues(m: &Matrix3<f64>) -> Result<RotVec, GeometryError> {
    check_rotation(m)?;
    Ok(log_so3(m))
}

fn log_so3(m: &Matrix3<f64>) -> RotVec {
    let w = vee(m);
    let s = w.norm();
    let c = 0.5 * (m.trace() - 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        return RotVec(w);
    }
    if s > 1e-4 {
        return RotVec(w * (theta / s));
    }

    // Near π the antisymmetric part vanishes; recover the axis from the
    // symmetric part, n nᵀ = (sym(R) − cos θ I) / (1 − cos θ), then fix its
    // sign from w.
    let sym = (m + m.transpose()) * 0.5;
    let b = (sym - Matrix3::identity() * c) / (1.0 - c);
    let (i, _) = (0..3).map(|i| (i, b[(i, i)])).fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut axis: Vector3<f64> = b.column(i).into_owned();
    axis /= axis.norm();
    let dot = axis.dot(&w);
    if dot < 0.0 || (dot == 0.0 && largest_is_negative(&axis)) {
        axis = -axis;
    }
    RotVec(axis * theta)
}

fn largest_is_negative(v: &Vector3<f64>) -> bool {
    let i = v.iamax();
    v[i] < 0.0
}

/// `a * b`.
pub fn compose(a: &HomTransform, b: &HomTransform) -> HomTransform {
    HomTransform::new(RotMat(a.rot.matrix() * b.rot.matrix()), a.rot.matrix() * b.t + a.t)
}

/// `(Rᵀ, -Rᵀ t)`.
pub fn invert(t: &HomTransform) -> HomTransform {
    let rt = t.rot.transpose();
    HomTransform::new(rt, -(rt.matrix() * t.t))
}

/// `R p + t`.
pub fn apply(t: &HomTransform, p: &Vector3<f64>) -> Vector3<f64> {
    t.rot.matrix() * p + t.t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Quaternion, UnitQuaternion, Vector4};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn rotation_error(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).norm()
    }

    #[test]
    fn euler_zero_is_identity() {
        let r = euler_to_rotmat(EulerAngles::default());
        assert_eq!(*r.matrix(), Matrix3::identity());
    }

    #[test]
    fn euler_quarter_turn_about_z() {
        let r = euler_to_rotmat(EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        assert_relative_eq!(r * Vector3::x(), Vector3::y(), epsilon = 1e-15);
        assert_relative_eq!(r * Vector3::y(), -Vector3::x(), epsilon = 1e-15);
        assert_relative_eq!(r * Vector3::z(), Vector3::z(), epsilon = 1e-15);
    }

    #[test]
    fn euler_matches_elementary_product_and_round_trips() {
        let a = EulerAngles::new(0.3, -0.2, 0.1);
        // elementary rotations written out by hand
        let (sz, cz) = (0.3f64.sin(), 0.3f64.cos());
        let (sy, cy) = ((-0.2f64).sin(), (-0.2f64).cos());
        let (sx, cx) = (0.1f64.sin(), 0.1f64.cos());
        let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
        let r = euler_to_rotmat(a);
        assert!(rotation_error(r.matrix(), &(rz * ry * rx)) < 1e-15);
        let back = rotmat_to_euler(&r);
        assert_relative_eq!(back.phi, 0.3, epsilon = 1e-12);
        assert_relative_eq!(back.theta, -0.2, epsilon = 1e-12);
        assert_relative_eq!(back.psi, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn gimbal_lock_still_reconstructs_matrix() {
        let a = EulerAngles::new(0.4, FRAC_PI_2, -0.3);
        let r = euler_to_rotmat(a);
        let back = rotmat_to_euler(&r);
        assert!(rotation_error(euler_to_rotmat(back).matrix(), r.matrix()) < 1e-7);
    }

    #[test]
    fn rodrigues_basic_cases() {
        assert_eq!(*rodrigues_to_rotmat(RotVec::new(0.0, 0.0, 0.0)).matrix(), Matrix3::identity());
        let q = rodrigues_to_rotmat(RotVec::new(0.0, 0.0, FRAC_PI_2));
        let e = euler_to_rotmat(EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        assert!(rotation_error(q.matrix(), e.matrix()) < 1e-15);
    }

    #[test]
    fn rodrigues_matches_quaternion_exponential() {
        let axis = Vector3::new(0.48, -0.6, 0.64).normalize();
        // q = (cos θ/2, sin θ/2 · n), rotation matrix written from the quaternion
        let half = 0.5f64;
        let q = Vector4::new(half.cos(), axis.x * half.sin(), axis.y * half.sin(), axis.z * half.sin());
        let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
        let oracle = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        let r = rodrigues_to_rotmat(RotVec(axis));
        assert!(rotation_error(r.matrix(), &oracle) < 1e-14);
        let nq = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        assert!(rotation_error(r.matrix(), &nq.to_rotation_matrix().into_inner()) < 1e-14);
    }

    #[test]
    fn log_of_identity_and_quarter_turn() {
        let v = rotmat_to_rodrigues(&Matrix3::identity()).unwrap();
        assert_eq!(v.0, Vector3::zeros());
        let v = rotmat_to_rodrigues(&rot_z(FRAC_PI_2)).unwrap();
        assert_relative_eq!(v.0, Vector3::new(0.0, 0.0, FRAC_PI_2), epsilon = 1e-15);
    }

    #[test]
    fn log_at_pi_about_x() {
        let v = rotmat_to_rodrigues(&rot_x(PI)).unwrap();
        assert_relative_eq!(v.0, Vector3::new(PI, 0.0, 0.0), epsilon = 1e-12);
        // eigenvector oracle for eigenvalue +1 of R = diag(1, -1, -1)
        let eig = rot_x(PI).symmetric_eigen();
        let i = eig.eigenvalues.imax();
        let n: Vector3<f64> = eig.eigenvectors.column(i).into_owned();
        assert_relative_eq!(n.abs(), Vector3::x(), epsilon = 1e-12);
    }

    #[test]
    fn log_near_pi_keeps_sign() {
        let axis = Vector3::new(0.2, -0.9, 0.4).normalize();
        for theta in [PI - 1e-3, PI - 1e-6, PI - 1e-9] {
            let r = rodrigues_to_rotmat(RotVec(axis * theta));
            let v = rotmat_to_rodrigues(r.matrix()).unwrap();
            assert!(rotation_error(rodrigues_to_rotmat(v).matrix(), r.matrix()) < 1e-9);
            assert!(v.0.dot(&axis) > 0.0);
        }
    }

    #[test]
    fn log_rejects_non_rotation() {
        let m = Matrix3::identity() * 1.01;
        assert!(matches!(rotmat_to_rodrigues(&m), Err(GeometryError::NotARotation { .. })));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(rotmat_to_rodrigues(&reflection).is_err());
    }

    #[test]
    fn compose_and_invert_basics() {
        let t = HomTransform::from_rotvec(RotVec::new(0.1, 0.2, -0.3), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(compose(&t, &HomTransform::identity()), t);
        let i = compose(&t, &invert(&t));
        assert!((i.matrix() - Matrix4::identity()).norm() < 1e-12);
        assert_eq!(invert(&HomTransform::identity()), HomTransform::identity());
        let p = invert(&HomTransform::from_translation(Vector3::new(0.0, 0.0, 100.0)));
        assert_eq!(p.t, Vector3::new(0.0, 0.0, -100.0));
    }

    #[test]
    fn compose_matches_dense_product() {
        let a = HomTransform::from_rotvec(RotVec::new(0.7, -0.1, 0.4), Vector3::new(10.0, -4.0, 2.5));
        let b = HomTransform::from_rotvec(RotVec::new(-1.2, 0.3, 0.9), Vector3::new(-3.0, 8.0, 40.0));
        let dense = a.matrix() * b.matrix();
        assert!((compose(&a, &b).matrix() - dense).norm() < 1e-12);
        let p = Vector3::new(5.0, -6.0, 7.0);
        let h = dense * p.push(1.0);
        assert_relative_eq!(apply(&compose(&a, &b), &p), h.xyz(), epsilon = 1e-12);
    }

    #[test]
    fn from_matrix_validates() {
        let mut m = Matrix4::identity();
        m[(3, 0)] = 1e-3;
        assert!(matches!(HomTransform::from_matrix(&m), Err(GeometryError::BadBottomRow(_))));
        let t = HomTransform::from_rotvec(RotVec::new(0.3, 0.0, 1.0), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(HomTransform::from_matrix(&t.matrix()).unwrap(), t);
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_relative_eq!(normalize_angle(-PI), PI, epsilon = 1e-15);
        assert_relative_eq!(normalize_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-15);
        assert_relative_eq!(normalize_angle(0.25 - 4.0 * PI), 0.25, epsilon = 1e-12);
    }

    fn arb_rotvec(max_angle: f64) -> impl Strategy<Value = RotVec> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..max_angle).prop_filter_map("non-zero axis", |(x, y, z, a)| {
            let v = Vector3::new(x, y, z);
            (v.norm() > 1e-3).then(|| RotVec(v.normalize() * a))
        })
    }

    fn arb_transform() -> impl Strategy<Value = HomTransform> {
        (arb_rotvec(PI), -500.0..500.0f64, -500.0..500.0f64, -500.0..500.0f64)
            .prop_map(|(r, x, y, z)| HomTransform::from_rotvec(r, Vector3::new(x, y, z)))
    }

    proptest! {
        #[test]
        fn rodrigues_round_trip(v in arb_rotvec(PI - 1e-6)) {
            let back = rotmat_to_rodrigues(rodrigues_to_rotmat(v).matrix()).unwrap();
            prop_assert!((back.0 - v.0).norm() < 1e-9);
        }

        #[test]
        fn euler_output_is_rotation(phi in -10.0..10.0f64, theta in -10.0..10.0f64, psi in -10.0..10.0f64) {
            let r = euler_to_rotmat(EulerAngles::new(phi, theta, psi));
            let m = r.matrix();
            prop_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let l = compose(&compose(&a, &b), &c).matrix();
            let r = compose(&a, &compose(&b, &c)).matrix();
            prop_assert!((l - r).norm() < 1e-9);
        }

        #[test]
        fn apply_distributes_over_compose(a in arb_transform(), b in arb_transform(),
                                         x in -1e3..1e3f64, y in -1e3..1e3f64, z in -1e3..1e3f64) {
            let p = Vector3::new(x, y, z);
            let lhs = apply(&compose(&a, &b), &p);
            let rhs = apply(&a, &apply(&b, &p));
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }
    }
}
