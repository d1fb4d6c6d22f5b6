//! Marker observations and the measurement-noise model.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{back_project, CameraError, CameraIntrinsics, PixelDepth};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("landmark {landmark_id}: {source}")]
    Depth {
        landmark_id: u32,
        #[source]
        source: CameraError,
    },
    #[error("landmark {0} observed more than once in one frame")]
    DuplicateId(u32),
    #[error("noise standard deviations must be positive and finite, got {0:?}")]
    InvalidNoise([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub landmark_id: u32,
    pub pixel: PixelDepth,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameObservations {
    pub waypoint_index: u64,
    pub observations: Vec<Observation>,
}

impl FrameObservations {
    pub fn check_unique_ids(&self) -> Result<(), MeasurementError> {
        let mut seen = BTreeSet::new();
        for o in &self.observations {
            if !seen.insert(o.landmark_id) {
                return Err(MeasurementError::DuplicateId(o.landmark_id));
            }
        }
        Ok(())
    }
}

/// A landmark measured in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPoint {
    pub id: u32,
    pub p: Vector3<f64>,
}

/// Per-axis standard deviations of a camera-frame point measurement, in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_alpha: f64,
}

impl NoiseModel {
    pub fn new(sigma_x: f64, sigma_y: f64, sigma_alpha: f64) -> Result<Self, MeasurementError> {
        let s = [sigma_x, sigma_y, sigma_alpha];
        if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(MeasurementError::InvalidNoise(s));
        }
        Ok(Self { sigma_x, sigma_y, sigma_alpha })
    }

    pub fn isotropic(sigma: f64) -> Result<Self, MeasurementError> {
        Self::new(sigma, sigma, sigma)
    }

    pub fn sigmas(&self) -> [f64; 3] {
        [self.sigma_x, self.sigma_y, self.sigma_alpha]
    }
}

/// How measurement noise is chosen for each observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementNoise {
    Fixed(NoiseModel),
    /// Isotropic `sigma = fraction * depth`, never below `floor_mm`.
    DepthProportional {
        fraction: f64,
        floor_mm: f64,
    },
}

impl Default for MeasurementNoise {
    /// 2 % of depth with a 1 mm floor, the depth sensor's rated accuracy.
    fn default() -> Self {
        Self::DepthProportional { fraction: 0.02, floor_mm: 1.0 }
    }
}

impl MeasurementNoise {
    pub fn model_at(&self, depth_mm: f64) -> NoiseModel {
        match *self {
            Self::Fixed(n) => n,
            Self::DepthProportional { fraction, floor_mm } => {
                let s = (fraction * depth_mm.abs()).max(floor_mm);
                NoiseModel { sigma_x: s, sigma_y: s, sigma_alpha: s }
            }
        }
    }
}

/// `diag(σx², σy², σα²)`.
pub fn noise_covariance(n: &NoiseModel) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(n.sigma_x * n.sigma_x, n.sigma_y * n.sigma_y, n.sigma_alpha * n.sigma_alpha))
}

/// Back-projects every observation of a frame, keeping ids and order.
pub fn to_camera_points(k: &CameraIntrinsics, frame: &FrameObservations) -> Result<Vec<CameraPoint>, MeasurementError> {
    frame
        .observations
        .iter()
        .map(|o| {
            back_project(k, &o.pixel)
                .map(|p| CameraPoint { id: o.landmark_id, p })
                .map_err(|source| MeasurementError::Depth { landmark_id: o.landmark_id, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(2.0, 300.0, 300.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn empty_frame() {
        let f = FrameObservations::default();
        assert!(to_camera_points(&k(), &f).unwrap().is_empty());
    }

    #[test]
    fn principal_point_observation() {
        let f = FrameObservations {
            waypoint_index: 0,
            observations: vec![Observation { landmark_id: 3, pixel: PixelDepth::new(320.0, 240.0, 500.0) }],
        };
        let pts = to_camera_points(&k(), &f).unwrap();
        assert_eq!(pts, vec![CameraPoint { id: 3, p: Vector3::new(0.0, 0.0, 500.0) }]);
    }

    #[test]
    fn bad_depth_is_tagged_with_id() {
        let f = FrameObservations {
            waypoint_index: 0,
            observations: vec![
                Observation { landmark_id: 1, pixel: PixelDepth::new(1.0, 1.0, 10.0) },
                Observation { landmark_id: 7, pixel: PixelDepth::new(1.0, 1.0, -2.0) },
            ],
        };
        match to_camera_points(&k(), &f) {
            Err(MeasurementError::Depth { landmark_id, .. }) => assert_eq!(landmark_id, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_detected() {
        let o = Observation { landmark_id: 2, pixel: PixelDepth::new(1.0, 1.0, 10.0) };
        let f = FrameObservations { waypoint_index: 0, observations: vec![o, o] };
        assert_eq!(f.check_unique_ids(), Err(MeasurementError::DuplicateId(2)));
    }

    #[test]
    fn covariance_values() {
        assert_eq!(noise_covariance(&NoiseModel::isotropic(1.0).unwrap()), Matrix3::identity());
        let n = NoiseModel::new(2.0, 3.0, 4.0).unwrap();
        let q = noise_covariance(&n);
        assert_eq!(q, Matrix3::from_diagonal(&Vector3::new(4.0, 9.0, 16.0)));
        let back: Vec<f64> = q.diagonal().iter().map(|v| v.sqrt()).collect();
        assert_eq!(back, n.sigmas().to_vec());
        assert!(q.cholesky().is_some());
    }

    #[test]
    fn invalid_noise_rejected() {
        assert!(NoiseModel::new(0.0, 1.0, 1.0).is_err());
        assert!(NoiseModel::new(1.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn depth_proportional_noise_has_floor() {
        let n = MeasurementNoise::default();
        assert_eq!(n.model_at(1000.0).sigma_x, 20.0);
        assert_eq!(n.model_at(10.0).sigma_x, 1.0);
    }
}
