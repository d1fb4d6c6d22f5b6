//! Pinhole intrinsics and depth back-projection.
//!
//! Intrinsics follow the physical parameterisation `(f, m_x, m_y, o_x, o_y)`:
//! focal length in mm, pixel densities in px/mm and the principal point in
//! px. The usual `fx`/`fy` in pixels are `f * m_x` and `f * m_y`. No lens
//! distortion is modelled.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("depth must be positive, got {0} mm")]
    NonPositiveDepth(f64),
    #[error("point is behind the camera (z = {0} mm)")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CameraIntrinsics {
    #[serde(rename = "f_mm")]
    pub f: f64,
    #[serde(rename = "mx_px_per_mm")]
    pub m_x: f64,
    #[serde(rename = "my_px_per_mm")]
    pub m_y: f64,
    #[serde(rename = "ox_px")]
    pub o_x: f64,
    #[serde(rename = "oy_px")]
    pub o_y: f64,
}

impl CameraIntrinsics {
    pub fn new(f: f64, m_x: f64, m_y: f64, o_x: f64, o_y: f64) -> Result<Self, CameraError> {
        let k = Self { f, m_x, m_y, o_x, o_y };
        k.validate()?;
        Ok(k)
    }

    /// Builds intrinsics from pixel focal lengths, with `f` fixed to 1 mm.
    pub fn from_pixel_focal(fx: f64, fy: f64, o_x: f64, o_y: f64) -> Result<Self, CameraError> {
        Self::new(1.0, fx, fy, o_x, o_y)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let vals = [self.f, self.m_x, self.m_y, self.o_x, self.o_y];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(CameraError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.f <= 0.0 || self.m_x <= 0.0 || self.m_y <= 0.0 {
            return Err(CameraError::InvalidIntrinsics(format!(
                "f, m_x, m_y must be positive (got {}, {}, {})",
                self.f, self.m_x, self.m_y
            )));
        }
        for (name, o) in [("o_x", self.o_x), ("o_y", self.o_y)] {
            if !(0.0..10000.0).contains(&o) {
                return Err(CameraError::InvalidIntrinsics(format!("{name} = {o} outside [0, 10000) px")));
            }
        }
        Ok(())
    }

    pub fn fx(&self) -> f64 {
        self.f * self.m_x
    }

    pub fn fy(&self) -> f64 {
        self.f * self.m_y
    }
}

#[derive(Deserialize)]
struct IntrinsicsFile {
    f_mm: Option<f64>,
    mx_px_per_mm: Option<f64>,
    my_px_per_mm: Option<f64>,
    fx_px: Option<f64>,
    fy_px: Option<f64>,
    ox_px: f64,
    oy_px: f64,
}

impl<'de> Deserialize<'de> for CameraIntrinsics {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = IntrinsicsFile::deserialize(d)?;
        let k = match (raw.f_mm, raw.mx_px_per_mm, raw.my_px_per_mm, raw.fx_px, raw.fy_px) {
            (Some(f), Some(mx), Some(my), None, None) => CameraIntrinsics::new(f, mx, my, raw.ox_px, raw.oy_px),
            (None, None, None, Some(fx), Some(fy)) => CameraIntrinsics::from_pixel_focal(fx, fy, raw.ox_px, raw.oy_px),
            _ => {
                return Err(D::Error::custom(
                    "intrinsics need either {f_mm, mx_px_per_mm, my_px_per_mm} or {fx_px, fy_px}",
                ))
            }
        };
        k.map_err(D::Error::custom)
    }
}

/// Pixel coordinates plus the depth reading along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelDepth {
    pub u: f64,
    pub v: f64,
    pub z_c: f64,
}

impl PixelDepth {
    pub fn new(u: f64, v: f64, z_c: f64) -> Self {
        Self { u, v, z_c }
    }
}

/// Camera-frame point from pixel + depth.
pub fn back_project(k: &CameraIntrinsics, p: &PixelDepth) -> Result<Vector3<f64>, CameraError> {
    if p.z_c.is_nan() || p.z_c <= 0.0 {
        return Err(CameraError::NonPositiveDepth(p.z_c));
    }
    Ok(Vector3::new(p.z_c * (p.u - k.o_x) / k.fx(), p.z_c * (p.v - k.o_y) / k.fy(), p.z_c))
}

/// The depth-scaled inverse intrinsic matrix: `M (u, v, 1)ᵀ = (x_c, y_c, z_c)ᵀ`.
pub fn build_homography(k: &CameraIntrinsics, z_c: f64) -> Result<Matrix3<f64>, CameraError> {
    if z_c.is_nan() || z_c <= 0.0 {
        return Err(CameraError::NonPositiveDepth(z_c));
    }
    let sx = z_c / k.fx();
    let sy = z_c / k.fy();
    Ok(Matrix3::new(sx, 0.0, -sx * k.o_x, 0.0, sy, -sy * k.o_y, 0.0, 0.0, z_c))
}

pub fn project(k: &CameraIntrinsics, p_cam: &Vector3<f64>) -> Result<PixelDepth, CameraError> {
    if p_cam.z.is_nan() || p_cam.z <= 0.0 {
        return Err(CameraError::BehindCamera(p_cam.z));
    }
    Ok(PixelDepth::new(k.o_x + k.fx() * p_cam.x / p_cam.z, k.o_y + k.fy() * p_cam.y / p_cam.z, p_cam.z))
}
