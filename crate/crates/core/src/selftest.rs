//! Built-in numeric checks run by `eih-calib selftest`.

use std::fmt;

use nalgebra::{Matrix3, Matrix3x6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::extract_from_ekf;
use crate::camera::{back_project, project};
use crate::ekf::{jacobian_h, measure_h, run_filter, FilterConfig};
use crate::evaluation::hand_eye_error;
use crate::geometry::{rodrigues_to_rotmat, rotmat_to_rodrigues, EulerAngles, Pose6, RotVec};
use crate::simulator::{default_intrinsics, render_dataset, scenario, ScenarioOptions};

pub const FD_STEP: f64 = 1e-5;
pub const JACOBIAN_REL_TOL: f64 = 1e-6;
pub const ROUND_TRIP_TOL: f64 = 1e-9;
pub const CLOSURE_TRANSLATION_MM: f64 = 0.5;
pub const CLOSURE_ROTATION_RAD: f64 = 1e-3;

pub type JacobianFn = fn(&Pose6, &Vector3<f64>) -> (Matrix3x6<f64>, Matrix3<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: worst {:.3e} (tol {:.1e}, {} samples)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.samples
        )
    }
}

fn outcome(name: &'static str, worst: f64, tolerance: f64, samples: usize) -> CheckOutcome {
    CheckOutcome { name, passed: worst.is_finite() && worst < tolerance, worst, tolerance, samples }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose6 {
    let pi = std::f64::consts::PI;
    Pose6::new(
        Vector3::new(
            rng.random_range(-1000.0..1000.0),
            rng.random_range(-1000.0..1000.0),
            rng.random_range(-1000.0..1000.0),
        ),
        EulerAngles::new(rng.random_range(-pi..pi), rng.random_range(-pi / 2.0..pi / 2.0), rng.random_range(-pi..pi)),
    )
}

/// Central-difference Jacobians of `measure_h`.
pub fn numeric_jacobian(pose: &Pose6, m: &Vector3<f64>, step: f64) -> (Matrix3x6<f64>, Matrix3<f64>) {
    let mut hp = Matrix3x6::zeros();
    let base = pose.to_array();
    for j in 0..6 {
        let (mut plus, mut minus) = (base, base);
        plus[j] += step;
        minus[j] -= step;
        let d = measure_h(&Pose6::from_array(plus), m) - measure_h(&Pose6::from_array(minus), m);
        hp.set_column(j, &(d / (2.0 * step)));
    }
    let mut hl = Matrix3::zeros();
    for j in 0..3 {
        let mut e = Vector3::zeros();
        e[j] = step;
        hl.set_column(j, &((measure_h(pose, &(m + e)) - measure_h(pose, &(m - e))) / (2.0 * step)));
    }
    (hp, hl)
}

/// Compares `jac` against finite differences; the error is relative to
/// the Frobenius norm of the numeric Jacobian.
pub fn jacobian_check(jac: JacobianFn, samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let pose = random_pose(&mut rng);
        let m = pose.t
            + Vector3::new(
                rng.random_range(-1500.0..1500.0),
                rng.random_range(-1500.0..1500.0),
                rng.random_range(-1500.0..1500.0),
            );
        let (hp, hl) = jac(&pose, &m);
        let (np, nl) = numeric_jacobian(&pose, &m, FD_STEP);
        let rel_p = (hp - np).norm() / np.norm().max(1.0);
        let rel_l = (hl - nl).norm() / nl.norm().max(1.0);
        worst = worst.max(rel_p).max(rel_l);
    }
    outcome("jacobian finite differences", worst, JACOBIAN_REL_TOL, samples)
}

/// Vector → matrix → vector for angles below π, and matrix → vector →
/// matrix over the full range.
pub fn rodrigues_round_trip(samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if axis.norm() < 1e-3 {
            continue;
        }
        let angle = rng.random_range(0.0..std::f64::consts::PI - 1e-6);
        let v = RotVec(axis.normalize() * angle);
        let r = rodrigues_to_rotmat(v);
        let back = match rotmat_to_rodrigues(r.matrix()) {
            Ok(b) => b,
            Err(_) => return outcome("rodrigues round trip", f64::INFINITY, ROUND_TRIP_TOL, samples),
        };
        let again = rodrigues_to_rotmat(back);
        worst = worst.max((back.0 - v.0).norm()).max((again.matrix() - r.matrix()).norm());
    }
    outcome("rodrigues round trip", worst, ROUND_TRIP_TOL, samples)
}

/// back_project ∘ project on random points in front of the camera.
pub fn camera_round_trip(samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = default_intrinsics();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let z = rng.random_range(50.0..3000.0);
        let p = Vector3::new(rng.random_range(-z..z), rng.random_range(-z..z), z);
        let back = project(&k, &p).and_then(|px| back_project(&k, &px));
        match back {
            Ok(b) => worst = worst.max((b - p).norm()),
            Err(_) => return outcome("camera round trip", f64::INFINITY, ROUND_TRIP_TOL, samples),
        }
    }
    outcome("camera round trip", worst, ROUND_TRIP_TOL, samples)
}

/// Noiseless default scenario through the filter; the worst quantity is
/// the larger of the two errors divided by its tolerance.
pub fn pipeline_closure(seed: u64) -> CheckOutcome {
    let opts = ScenarioOptions { noise: None, ..ScenarioOptions::default() };
    let run = scenario(seed, &opts)
        .map_err(|e| e.to_string())
        .and_then(|s| render_dataset(&s).map_err(|e| e.to_string()).map(|(d, _)| (s, d)))
        .and_then(|(s, d)| {
            let run = run_filter(&d, &FilterConfig::default()).map_err(|e| e.to_string())?;
            let ee = d.ee_poses();
            Ok((s, extract_from_ekf(&run.final_camera, ee.last().expect("waypoints"))))
        });
    let worst = match run {
        Ok((s, he)) => {
            let axis = (he.x.t - s.true_x.t).abs().max();
            let rot = hand_eye_error(&he.x, &s.true_x).rotation_rad;
            (axis / CLOSURE_TRANSLATION_MM).max(rot / CLOSURE_ROTATION_RAD)
        }
        Err(_) => f64::INFINITY,
    };
    outcome("pipeline closure", worst, 1.0, 1)
}

pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        jacobian_check(jacobian_h, 1000, seed),
        rodrigues_round_trip(1000, seed),
        camera_round_trip(1000, seed),
        pipeline_closure(seed),
    ]
}
