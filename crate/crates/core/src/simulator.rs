//! Synthetic eye-in-hand experiment with ground truth.
//!
//! The default world mirrors a wall-mounted arm: eight markers on a 4×2
//! grid lying in a base-frame X-Z plane about a metre below the camera, a
//! depth camera mounted 6 mm along +Y and 40 mm along +Z of the
//! end-effector, and a short waypoint trajectory around a nominal
//! end-effector position.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{project, CameraIntrinsics};
use crate::dataset::{
    BoardMarker, Dataset, GroundTruthFile, LandmarkRecord, ObservationRecord, PoseRecord, TransformRecord,
    WaypointRecord,
};
use crate::ekf::nominal_mount_rotation;
use crate::geometry::{compose, invert, EulerAngles, HomTransform, Pose6};
use crate::measurement::MeasurementNoise;

/// Nominal end-effector position (mm).
pub const NOMINAL_EE_POSITION: [f64; 3] = [-102.12, -265.85, 955.47];
/// Camera offset from the end-effector origin, in the end-effector frame (mm).
pub const CAMERA_OFFSET_MM: [f64; 3] = [0.0, 6.0, 40.0];
pub const MARKER_COUNT: usize = 8;
pub const DEFAULT_WAYPOINTS: usize = 10;
/// Camera-to-board distance at the nominal pose (mm).
pub const BOARD_DEPTH_MM: f64 = 1000.0;
/// Half-range of the per-axis waypoint spread (mm).
pub const WAYPOINT_HALF_RANGE_MM: f64 = 35.0;
/// Uniform orientation jitter bound of the excited preset (rad).
pub const ORIENTATION_JITTER_RAD: f64 = 0.05;
pub const SURVEY_SIGMA_MM: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("waypoint {waypoint}: landmark {landmark} is not visible ({reason})")]
    NotVisible { waypoint: usize, landmark: u32, reason: String },
    #[error("trajectory spans only {span:.1} mm along axis {axis} (need ≥ 20 mm)")]
    NarrowTrajectory { axis: usize, span: f64 },
    #[error("board markers are not coplanar in base-frame y")]
    BoardNotPlanar,
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Translation-only waypoints, as taught on a pendant.
    Paper,
    /// Translation-dominant waypoints with small orientation jitter.
    Excited,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOptions {
    pub waypoints: usize,
    pub preset: Preset,
    pub noise: Option<MeasurementNoise>,
    /// Include the marker survey in the rendered dataset.
    pub survey: bool,
    pub true_x: HomTransform,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            waypoints: DEFAULT_WAYPOINTS,
            preset: Preset::Excited,
            noise: Some(MeasurementNoise::default()),
            survey: true,
            true_x: nominal_hand_eye(),
        }
    }
}

/// Axis-permutation mount rotation with the nominal camera offset.
pub fn nominal_hand_eye() -> HomTransform {
    HomTransform::new(nominal_mount_rotation().rot, Vector3::from(CAMERA_OFFSET_MM))
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(1.93, 310.0, 310.0, 320.0, 240.0).expect("valid intrinsics")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    /// Camera → end-effector.
    pub true_x: HomTransform,
    pub board: Vec<(u32, Vector3<f64>)>,
    /// End-effector poses in the base frame.
    pub trajectory: Vec<Pose6>,
    pub intrinsics: CameraIntrinsics,
    pub noise: Option<MeasurementNoise>,
    pub survey: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub camera_poses: Vec<HomTransform>,
    pub landmarks: Vec<(u32, Vector3<f64>)>,
}

pub fn default_scenario(seed: u64) -> SimScenario {
    scenario(seed, &ScenarioOptions::default()).expect("default scenario is valid")
}

/// Board grid centred under the nominal camera position.
fn default_board(true_x: &HomTransform) -> Vec<(u32, Vector3<f64>)> {
    let ee = Pose6::new(Vector3::from(NOMINAL_EE_POSITION), EulerAngles::default());
    let cam = compose(&ee.to_transform(), true_x).t;
    let y = cam.y - BOARD_DEPTH_MM;
    let xs = [-375.0, -125.0, 125.0, 375.0];
    let zs = [-200.0, 200.0];
    let mut id = 0;
    let mut out = Vec::with_capacity(MARKER_COUNT);
    for dz in zs {
        for dx in xs {
            out.push((id, Vector3::new(cam.x + dx, y, cam.z + dz)));
            id += 1;
        }
    }
    out
}

fn trajectory(rng: &mut ChaCha8Rng, n: usize, preset: Preset) -> Vec<Pose6> {
    // Shuffled evenly spaced offsets give every axis the full spread for
    // any n ≥ 2.
    let mut axes: [Vec<f64>; 3] = Default::default();
    for axis in axes.iter_mut() {
        *axis = (0..n)
            .map(|i| -WAYPOINT_HALF_RANGE_MM + 2.0 * WAYPOINT_HALF_RANGE_MM * i as f64 / (n - 1) as f64)
            .collect();
        axis.shuffle(rng);
    }
    let base = Vector3::from(NOMINAL_EE_POSITION);
    (0..n)
        .map(|i| {
            let jitter =
                Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let t = base + Vector3::new(axes[0][i], axes[1][i], axes[2][i]) + jitter;
            let angles = match preset {
                Preset::Paper => EulerAngles::default(),
                Preset::Excited => {
                    let j = ORIENTATION_JITTER_RAD;
                    EulerAngles::new(rng.random_range(-j..j), rng.random_range(-j..j), rng.random_range(-j..j))
                }
            };
            Pose6::new(t, angles)
        })
        .collect()
}

pub fn scenario(seed: u64, opts: &ScenarioOptions) -> Result<SimScenario, SimError> {
    if opts.waypoints < 2 {
        return Err(SimError::TooFewWaypoints(opts.waypoints));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = SimScenario {
        true_x: opts.true_x,
        board: default_board(&opts.true_x),
        trajectory: trajectory(&mut rng, opts.waypoints, opts.preset),
        intrinsics: default_intrinsics(),
        noise: opts.noise,
        survey: opts.survey,
        seed,
    };
    s.validate()?;
    Ok(s)
}

impl SimScenario {
    pub fn camera_pose(&self, i: usize) -> HomTransform {
        compose(&self.trajectory[i].to_transform(), &self.true_x)
    }

    /// Noise-free camera-frame points at waypoint `i`.
    pub fn camera_points(&self, i: usize) -> Vec<(u32, Vector3<f64>)> {
        let world_to_cam = invert(&self.camera_pose(i));
        self.board.iter().map(|(id, p)| (*id, world_to_cam.apply(p))).collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.trajectory.len() < 2 {
            return Err(SimError::TooFewWaypoints(self.trajectory.len()));
        }
        if let Some((_, first)) = self.board.first() {
            if self.board.iter().any(|(_, p)| (p.y - first.y).abs() > 1e-9) {
                return Err(SimError::BoardNotPlanar);
            }
        }
        for axis in 0..3 {
            let vals = self.trajectory.iter().map(|p| p.t[axis]);
            let lo = vals.clone().fold(f64::INFINITY, f64::min);
            let hi = vals.fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < 20.0 {
                return Err(SimError::NarrowTrajectory { axis, span: hi - lo });
            }
        }
        let k = &self.intrinsics;
        for i in 0..self.trajectory.len() {
            for (id, p) in self.camera_points(i) {
                let px = project(k, &p).map_err(|e| SimError::NotVisible {
                    waypoint: i,
                    landmark: id,
                    reason: e.to_string(),
                })?;
                if !(0.0..2.0 * k.o_x).contains(&px.u) || !(0.0..2.0 * k.o_y).contains(&px.v) {
                    return Err(SimError::NotVisible {
                        waypoint: i,
                        landmark: id,
                        reason: format!("pixel ({:.1}, {:.1}) outside the image", px.u, px.v),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            camera_poses: (0..self.trajectory.len()).map(|i| self.camera_pose(i)).collect(),
            landmarks: self.board.clone(),
        }
    }

    pub fn ground_truth_file(&self) -> GroundTruthFile {
        GroundTruthFile {
            true_x: TransformRecord::from(&self.true_x),
            camera_poses: self.ground_truth().camera_poses.iter().map(|c| PoseRecord::from(&c.to_pose())).collect(),
            landmarks: self.board.iter().map(|(id, p)| LandmarkRecord { id: *id, p_mm: (*p).into() }).collect(),
            seed: self.seed,
        }
    }
}

/// Renders observations: camera-frame points perturbed by the scenario
/// noise, then encoded as pixel + depth.
pub fn render_dataset(s: &SimScenario) -> Result<(Dataset, GroundTruth), SimError> {
    s.validate()?;
    // Independent stream from the one that drew the trajectory.
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(1);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut waypoints = Vec::with_capacity(s.trajectory.len());
    for (i, ee) in s.trajectory.iter().enumerate() {
        let mut observations = Vec::with_capacity(s.board.len());
        for (id, p) in s.camera_points(i) {
            let noisy = match &s.noise {
                None => p,
                Some(n) => {
                    let sig = n.model_at(p.z).sigmas();
                    p + Vector3::new(
                        sig[0] * unit.sample(&mut rng),
                        sig[1] * unit.sample(&mut rng),
                        sig[2] * unit.sample(&mut rng),
                    )
                }
            };
            let px = project(&s.intrinsics, &noisy).map_err(|e| SimError::NotVisible {
                waypoint: i,
                landmark: id,
                reason: e.to_string(),
            })?;
            observations.push(ObservationRecord { id, u_px: px.u, v_px: px.v, depth_mm: px.z_c });
        }
        waypoints.push(WaypointRecord { index: i as u64, ee_pose: PoseRecord::from(ee), observations });
    }
    let board = if s.survey {
        s.board.iter().map(|(id, p)| BoardMarker { id: *id, p_mm: (*p).into(), sigma_mm: SURVEY_SIGMA_MM }).collect()
    } else {
        Vec::new()
    };
    Ok((Dataset { intrinsics: s.intrinsics, waypoints, board }, s.ground_truth()))
}
