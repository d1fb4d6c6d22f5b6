//! Eye-in-hand calibration of a wrist-mounted depth camera.
//!
//! The pipeline: marker observations (id, pixel, depth) are back-projected
//! into the camera frame, an EKF-SLAM filter tracks the camera pose and the
//! marker map along the end-effector waypoint trajectory, and the hand-eye
//! transform is read off the final camera and end-effector poses. A batch
//! `AX = XB` solver and a simulator with ground truth are provided for
//! cross-checking.

pub mod calibration;
pub mod camera;
pub mod cli;
pub mod dataset;
pub mod ekf;
pub mod evaluation;
pub mod geometry;
pub mod measurement;
pub mod selftest;
pub mod simulator;

pub use calibration::{extract_from_ekf, hand_eye_from_pairs, solve_axxb, HandEyeResult, Motion, PosePair};
pub use camera::{back_project, build_homography, project, CameraIntrinsics, PixelDepth};
pub use dataset::{Dataset, GroundTruthFile, Method, ResultReport};
pub use ekf::{run_filter, EkfState, FilterConfig, FilterRun};
pub use geometry::{EulerAngles, HomTransform, Pose6, RotMat, RotVec};
pub use measurement::{MeasurementNoise, NoiseModel};
pub use simulator::{default_scenario, render_dataset, Preset, ScenarioOptions, SimScenario};
