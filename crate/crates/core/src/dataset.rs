//! On-disk JSON schemas: observation datasets, simulator ground truth and
//! calibration reports. All lengths are mm, all angles rad.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, PixelDepth};
use crate::geometry::{EulerAngles, HomTransform, Pose6, RotVec};
use crate::measurement::{FrameObservations, Observation};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("waypoint {waypoint}: {field}: {message}")]
    Waypoint { waypoint: u64, field: String, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

impl SchemaError {
    fn waypoint(waypoint: u64, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Waypoint { waypoint, field: field.into(), message: message.into() }
    }

    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Field { field: field.into(), message: message.into() }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub t_mm: [f64; 3],
    pub euler_rad: [f64; 3],
}

impl From<&Pose6> for PoseRecord {
    fn from(p: &Pose6) -> Self {
        Self { t_mm: p.t.into(), euler_rad: p.angles.to_array() }
    }
}

impl From<&PoseRecord> for Pose6 {
    fn from(r: &PoseRecord) -> Self {
        Pose6::new(Vector3::from(r.t_mm), EulerAngles::from_array(r.euler_rad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub rotvec_rad: [f64; 3],
    pub t_mm: [f64; 3],
}

impl From<&HomTransform> for TransformRecord {
    fn from(t: &HomTransform) -> Self {
        Self { rotvec_rad: t.rot.to_rodrigues().0.into(), t_mm: t.t.into() }
    }
}

impl TransformRecord {
    pub fn to_transform(&self) -> Result<HomTransform, SchemaError> {
        if !all_finite(&self.rotvec_rad) || !all_finite(&self.t_mm) {
            return Err(SchemaError::field("transform", "non-finite value"));
        }
        Ok(HomTransform::from_rotvec(RotVec(self.rotvec_rad.into()), self.t_mm.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub id: u32,
    pub u_px: f64,
    pub v_px: f64,
    pub depth_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointRecord {
    pub index: u64,
    pub ee_pose: PoseRecord,
    pub observations: Vec<ObservationRecord>,
}

/// Surveyed marker position in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardMarker {
    pub id: u32,
    pub p_mm: [f64; 3],
    pub sigma_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics,
    pub waypoints: Vec<WaypointRecord>,
    /// Optional marker survey. Without it the map is only known relative to
    /// the initial camera pose.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub board: Vec<BoardMarker>,
}

impl Dataset {
    pub fn from_json(s: &str) -> Result<Self, SchemaError> {
        let d: Dataset = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut last: Option<u64> = None;
        for w in &self.waypoints {
            if let Some(prev) = last {
                if w.index <= prev {
                    return Err(SchemaError::waypoint(
                        w.index,
                        "index",
                        format!("must be strictly increasing (previous {prev})"),
                    ));
                }
            }
            last = Some(w.index);
            if !all_finite(&w.ee_pose.t_mm) {
                return Err(SchemaError::waypoint(w.index, "ee_pose.t_mm", "non-finite value"));
            }
            if !all_finite(&w.ee_pose.euler_rad) {
                return Err(SchemaError::waypoint(w.index, "ee_pose.euler_rad", "non-finite value"));
            }
            let mut ids = BTreeSet::new();
            for o in &w.observations {
                if !ids.insert(o.id) {
                    return Err(SchemaError::waypoint(
                        w.index,
                        "observations.id",
                        format!("duplicate landmark id {}", o.id),
                    ));
                }
                if !all_finite(&[o.u_px, o.v_px, o.depth_mm]) {
                    return Err(SchemaError::waypoint(
                        w.index,
                        "observations",
                        format!("non-finite value for landmark {}", o.id),
                    ));
                }
                if o.depth_mm <= 0.0 {
                    return Err(SchemaError::waypoint(
                        w.index,
                        "observations.depth_mm",
                        format!("landmark {} has non-positive depth {}", o.id, o.depth_mm),
                    ));
                }
            }
        }
        let mut ids = BTreeSet::new();
        for b in &self.board {
            if !ids.insert(b.id) {
                return Err(SchemaError::field("board.id", format!("duplicate marker id {}", b.id)));
            }
            if !all_finite(&b.p_mm) || !(b.sigma_mm.is_finite() && b.sigma_mm > 0.0) {
                return Err(SchemaError::field(
                    "board",
                    format!("marker {} needs finite p_mm and positive sigma_mm", b.id),
                ));
            }
        }
        Ok(())
    }

    pub fn ee_poses(&self) -> Vec<Pose6> {
        self.waypoints.iter().map(|w| Pose6::from(&w.ee_pose)).collect()
    }

    pub fn frames(&self) -> Vec<FrameObservations> {
        self.waypoints
            .iter()
            .map(|w| FrameObservations {
                waypoint_index: w.index,
                observations: w
                    .observations
                    .iter()
                    .map(|o| Observation { landmark_id: o.id, pixel: PixelDepth::new(o.u_px, o.v_px, o.depth_mm) })
                    .collect(),
            })
            .collect()
    }

    /// Keeps only the first `n` waypoints.
    pub fn truncated(&self, n: usize) -> Self {
        let mut d = self.clone();
        d.waypoints.truncate(n);
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub id: u32,
    pub p_mm: [f64; 3],
}

/// Simulator sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    #[serde(rename = "true_X")]
    pub true_x: TransformRecord,
    pub camera_poses: Vec<PoseRecord>,
    pub landmarks: Vec<LandmarkRecord>,
    pub seed: u64,
}

impl GroundTruthFile {
    pub fn from_json(s: &str) -> Result<Self, SchemaError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ekf,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualsRecord {
    pub rotation_rad: f64,
    pub translation_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPointRecord {
    pub index: u64,
    pub pose: PoseRecord,
}

/// Calibration report written by `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultReport {
    pub method: Method,
    #[serde(rename = "X")]
    pub x: TransformRecord,
    pub residuals: ResidualsRecord,
    pub pairs_used: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub camera_trajectory: Vec<TrajectoryPointRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub landmarks: Vec<LandmarkRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ResultReport {
    pub fn from_json(s: &str) -> Result<Self, SchemaError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset {
            intrinsics: CameraIntrinsics::new(2.0, 300.0, 300.0, 320.0, 240.0).unwrap(),
            waypoints: vec![
                WaypointRecord {
                    index: 0,
                    ee_pose: PoseRecord { t_mm: [1.0, 2.0, 3.0], euler_rad: [0.0, 0.1, 0.0] },
                    observations: vec![ObservationRecord { id: 0, u_px: 300.5, v_px: 200.25, depth_mm: 1000.0 }],
                },
                WaypointRecord {
                    index: 1,
                    ee_pose: PoseRecord { t_mm: [1.1, 2.0, 3.0], euler_rad: [0.0, 0.1, 0.0] },
                    observations: vec![],
                },
            ],
            board: vec![],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let d = sample();
        let s = d.to_json();
        let back = Dataset::from_json(&s).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_json(), s);
        assert!(!s.contains("board"));
    }

    #[test]
    fn rejects_non_monotone_index() {
        let mut d = sample();
        d.waypoints[1].index = 0;
        let e = d.validate().unwrap_err().to_string();
        assert!(e.contains("waypoint 0") && e.contains("index"), "{e}");
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_depth() {
        let mut d = sample();
        let o = d.waypoints[0].observations[0];
        d.waypoints[0].observations.push(o);
        assert!(d.validate().unwrap_err().to_string().contains("duplicate"));
        let mut d = sample();
        d.waypoints[0].observations[0].depth_mm = 0.0;
        assert!(d.validate().unwrap_err().to_string().contains("depth_mm"));
    }

    #[test]
    fn rejects_nan_literals() {
        let s = sample().to_json().replace("300.5", "NaN");
        assert!(matches!(Dataset::from_json(&s), Err(SchemaError::Json(_))));
        let s = sample().to_json().replace("300.5", "1e999");
        assert!(Dataset::from_json(&s).is_err());
    }

    #[test]
    fn missing_field_is_reported() {
        let s = sample().to_json().replace("\"depth_mm\"", "\"depth\"");
        let e = Dataset::from_json(&s).unwrap_err().to_string();
        assert!(e.contains("depth_mm"), "{e}");
    }
}
