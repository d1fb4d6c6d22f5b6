//! Command-line front end: `simulate`, `calibrate`, `evaluate`, `selftest`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    extract_from_ekf, hand_eye_from_pairs, pairs_from_dataset, relative_motions, CalibrationError, HandEyeResult,
};
use crate::dataset::{
    Dataset, GroundTruthFile, LandmarkRecord, Method, PoseRecord, ResidualsRecord, ResultReport, SchemaError,
    TrajectoryPointRecord, TransformRecord,
};
use crate::ekf::{run_filter, EkfError, FilterConfig};
use crate::evaluation::{hand_eye_error, paper_table_check, position_error, HandEyeError, PositionError, TableCheck};
use crate::geometry::{compose, invert, HomTransform, Pose6};
use crate::measurement::MeasurementNoise;
use crate::selftest;
use crate::simulator::{render_dataset, scenario, Preset, ScenarioOptions, SimError, DEFAULT_WAYPOINTS};

#[derive(Debug, Parser)]
#[command(name = "eih-calib", version, about = "Eye-in-hand camera calibration with EKF-SLAM")]
pub struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Estimate the hand-eye transform from a dataset.
    Calibrate(CalibrateArgs),
    /// Score a calibration result, or reproduce the published table.
    Evaluate(EvaluateArgs),
    /// Run the built-in numeric checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Dataset output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth output path [default: <out stem>.truth.json].
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Measurement sigma as a fraction of depth; 0 disables noise.
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = DEFAULT_WAYPOINTS)]
    pub waypoints: usize,
    #[arg(long, value_enum, default_value_t = Preset::Excited)]
    pub preset: Preset,
    /// Leave the marker survey out of the dataset.
    #[arg(long)]
    pub no_survey: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Ekf)]
    pub method: Method,
    /// Filter config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Result output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Calibration result to score.
    #[arg(long, requires = "ground_truth")]
    pub result: Option<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Recompute the published localization table.
    #[arg(long)]
    pub paper_table: bool,
    /// JSON report output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-waypoint camera error CSV output path.
    #[arg(long, requires = "result")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::ChecksFailed(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

fn with_path(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match &e {
            CalibrationError::TooFew { .. } | CalibrationError::DegenerateMotion(_) => {
                CliError::Degenerate(e.to_string())
            }
            CalibrationError::Numerical(_) => CliError::Numerical(e.to_string()),
            CalibrationError::BoardPose { .. } | CalibrationError::Measurement(_) => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<EkfError> for CliError {
    fn from(e: EkfError) -> Self {
        let mut inner = &e;
        while let EkfError::AtWaypoint { source, .. } = inner {
            inner = source;
        }
        match inner {
            EkfError::SingularInnovation { .. } | EkfError::NotPsd { .. } | EkfError::NonFinite(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

/// Writes through a temporary file in the target directory, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load<T>(path: &Path, parse: impl Fn(&str) -> Result<T, SchemaError>) -> Result<T, CliError> {
    parse(&read(path)?).map_err(|e| CliError::Validation(with_path(path, e)))
}

pub fn default_ground_truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    out.with_file_name(format!("{stem}.truth.json"))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(CliError::Validation(format!("--noise must be a non-negative fraction, got {}", args.noise)));
    }
    let noise =
        (args.noise > 0.0).then_some(MeasurementNoise::DepthProportional { fraction: args.noise, floor_mm: 1.0 });
    let opts = ScenarioOptions {
        waypoints: args.waypoints,
        preset: args.preset,
        noise,
        survey: !args.no_survey,
        ..ScenarioOptions::default()
    };
    let s = scenario(args.seed, &opts)?;
    let (dataset, _) = render_dataset(&s)?;
    let gt_path = args.ground_truth.clone().unwrap_or_else(|| default_ground_truth_path(&args.out));
    write_atomic(&args.out, &dataset.to_json())?;
    write_atomic(&gt_path, &s.ground_truth_file().to_json())?;
    Ok(format!(
        "wrote {} ({} landmarks, {} waypoints, noise {}) and {}",
        args.out.display(),
        s.board.len(),
        s.trajectory.len(),
        if args.noise > 0.0 { format!("{:.1} % of depth", args.noise * 100.0) } else { "none".into() },
        gt_path.display()
    ))
}

/// Below this, batch translation error grows roughly as noise / angle.
const WEAK_EXCITATION_RAD: f64 = 0.2;

/// RMS spread of the per-waypoint `T_ee⁻¹ · T_cam` around `x`.
fn mount_spread(x: &HomTransform, ee: &[Pose6], cams: &[HomTransform]) -> ResidualsRecord {
    let n = ee.len().max(1) as f64;
    let (mut r, mut t) = (0.0, 0.0);
    for (e, c) in ee.iter().zip(cams) {
        let xi = compose(&invert(&e.to_transform()), c);
        r += compose(&invert(x), &xi).rot.angle().powi(2);
        t += (xi.t - x.t).norm_squared();
    }
    ResidualsRecord { rotation_rad: (r / n).sqrt(), translation_mm: (t / n).sqrt() }
}

fn trajectory_records(dataset: &Dataset, cams: &[HomTransform]) -> Vec<TrajectoryPointRecord> {
    dataset
        .waypoints
        .iter()
        .zip(cams)
        .map(|(w, c)| TrajectoryPointRecord { index: w.index, pose: PoseRecord::from(&c.to_pose()) })
        .collect()
}

pub fn calibrate(dataset: &Dataset, method: Method, config: &FilterConfig) -> Result<ResultReport, CliError> {
    let ee = dataset.ee_poses();
    match method {
        Method::Ekf => {
            let run = run_filter(dataset, config)?;
            let he = extract_from_ekf(&run.final_camera, ee.last().expect("filter needs waypoints"));
            let state = run.final_state();
            let landmarks = state
                .landmark_ids()
                .iter()
                .map(|&id| LandmarkRecord { id, p_mm: state.landmark(id).expect("id in state").into() })
                .collect();
            Ok(ResultReport {
                method,
                x: TransformRecord::from(&he.x),
                residuals: mount_spread(&he.x, &ee, &run.camera_poses),
                pairs_used: run.camera_poses.len(),
                camera_trajectory: trajectory_records(dataset, &run.camera_poses),
                landmarks,
                warnings: run.warnings,
            })
        }
        Method::Batch => {
            let pairs = pairs_from_dataset(dataset)?;
            let largest = relative_motions(&pairs)?.iter().map(|m| m.b.rot.angle()).fold(0.0, f64::max);
            let mut warnings = Vec::new();
            if largest < WEAK_EXCITATION_RAD {
                let msg = format!(
                    "largest relative rotation is {largest:.3} rad; the batch translation is poorly conditioned \
                     under measurement noise"
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            let HandEyeResult { x, rot_residual, trans_residual, pairs_used } = hand_eye_from_pairs(&pairs)?;
            let cams: Vec<HomTransform> = ee.iter().map(|e| compose(&e.to_transform(), &x)).collect();
            Ok(ResultReport {
                method,
                x: TransformRecord::from(&x),
                residuals: ResidualsRecord { rotation_rad: rot_residual, translation_mm: trans_residual },
                pairs_used,
                camera_trajectory: trajectory_records(dataset, &cams),
                landmarks: Vec::new(),
                warnings,
            })
        }
    }
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<String, CliError> {
    let dataset = load(&args.dataset, Dataset::from_json)?;
    let config = match &args.config {
        Some(p) => FilterConfig::from_json(&read(p)?).map_err(|e| CliError::Validation(with_path(p, e)))?,
        None => FilterConfig::default(),
    };
    let report = calibrate(&dataset, args.method, &config)?;
    write_atomic(&args.out, &report.to_json())?;
    let mut msg = format!(
        "{:?}: X t = [{:.3}, {:.3}, {:.3}] mm, rotvec = [{:.5}, {:.5}, {:.5}] rad, residuals {:.3e} rad / {:.3e} mm",
        args.method,
        report.x.t_mm[0],
        report.x.t_mm[1],
        report.x.t_mm[2],
        report.x.rotvec_rad[0],
        report.x.rotvec_rad[1],
        report.x.rotvec_rad[2],
        report.residuals.rotation_rad,
        report.residuals.translation_mm
    );
    for w in &report.warnings {
        write!(msg, "\nwarning: {w}").expect("string write");
    }
    Ok(msg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointError {
    pub index: u64,
    pub position: PositionError,
    pub rotation_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hand_eye: Option<HandEyeError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_camera: Option<PositionError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper_table: Option<TableCheck>,
}

pub fn evaluate(
    result: &ResultReport,
    truth: &GroundTruthFile,
) -> Result<(HandEyeError, Vec<WaypointError>), CliError> {
    let bad = |m: String| CliError::Validation(m);
    if !result.landmarks.is_empty() && result.landmarks.len() != truth.landmarks.len() {
        return Err(bad(format!(
            "landmark count mismatch: result has {}, ground truth has {}",
            result.landmarks.len(),
            truth.landmarks.len()
        )));
    }
    if !result.camera_trajectory.is_empty() && result.camera_trajectory.len() != truth.camera_poses.len() {
        return Err(bad(format!(
            "waypoint count mismatch: result has {}, ground truth has {}",
            result.camera_trajectory.len(),
            truth.camera_poses.len()
        )));
    }
    let x = result.x.to_transform().map_err(|e| bad(format!("result X: {e}")))?;
    let true_x = truth.true_x.to_transform().map_err(|e| bad(format!("true_X: {e}")))?;
    let per_waypoint = result
        .camera_trajectory
        .iter()
        .zip(&truth.camera_poses)
        .map(|(est, gt)| {
            let (e, g) = (Pose6::from(&est.pose).to_transform(), Pose6::from(gt).to_transform());
            WaypointError {
                index: est.index,
                position: position_error(&e.t, &g.t),
                rotation_rad: compose(&invert(&g), &e).rot.angle(),
            }
        })
        .collect();
    Ok((hand_eye_error(&x, &true_x), per_waypoint))
}

fn csv_rows(rows: &[WaypointError]) -> String {
    let mut s = String::from("index,dx_mm,dy_mm,dz_mm,l2_mm,rotation_rad\n");
    for r in rows {
        let [dx, dy, dz] = r.position.abs_mm;
        writeln!(s, "{},{dx},{dy},{dz},{},{}", r.index, r.position.l2_mm, r.rotation_rad).expect("string write");
    }
    s
}

fn fmt_pct(p: &[Option<f64>; 3]) -> String {
    let parts: Vec<String> = p.iter().map(|v| v.map_or("n/a".into(), |v| format!("{v:.2}%"))).collect();
    parts.join(", ")
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String, CliError> {
    if !args.paper_table && args.result.is_none() {
        return Err(CliError::Validation("evaluate needs --result with --ground-truth, or --paper-table".into()));
    }
    let mut report = EvaluationReport { hand_eye: None, final_camera: None, paper_table: None };
    let mut lines = Vec::new();
    if args.paper_table {
        let t = paper_table_check();
        lines.push(format!(
            "table vs end-effector actual: ({}), L2 = {:.3} mm",
            fmt_pct(&t.vs_end_effector.percent),
            t.vs_end_effector.l2_mm
        ));
        lines.push(format!(
            "table vs camera actual: ({}), L2 = {:.3} mm",
            fmt_pct(&t.vs_camera_actual.percent),
            t.vs_camera_actual.l2_mm
        ));
        lines.push(format!("published values reproduced: {}", if t.reproduced { "yes" } else { "no" }));
        report.paper_table = Some(t);
    }
    if let (Some(rp), Some(gp)) = (&args.result, &args.ground_truth) {
        let result = load(rp, ResultReport::from_json)?;
        let truth = load(gp, GroundTruthFile::from_json)?;
        let (he, rows) = evaluate(&result, &truth)?;
        lines.push(format!("hand-eye error: {:.3e} rad, {:.3} mm", he.rotation_rad, he.translation_mm));
        if let Some(last) = rows.last() {
            let p = &last.position;
            lines.push(format!(
                "final camera error: [{:.3}, {:.3}, {:.3}] mm, L2 = {:.3} mm",
                p.abs_mm[0], p.abs_mm[1], p.abs_mm[2], p.l2_mm
            ));
            report.final_camera = Some(*p);
        }
        report.hand_eye = Some(he);
        if let Some(csv) = &args.csv {
            if rows.is_empty() {
                return Err(CliError::Validation("result has no camera trajectory for --csv".into()));
            }
            write_atomic(csv, &csv_rows(&rows))?;
        }
    }
    if let Some(out) = &args.out {
        write_atomic(out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    Ok(lines.join("\n"))
}

pub fn cmd_selftest(args: &SelftestArgs) -> Result<String, CliError> {
    let checks = selftest::run_all(args.seed);
    let lines: Vec<String> = checks.iter().map(|c| c.to_string()).collect();
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{}", lines.join("\n"));
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(format!("all {} checks passed", checks.len()))
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Selftest(a) => cmd_selftest(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        let cli =
            Cli::try_parse_from(["eih-calib", "simulate", "--out", "d.json", "--seed", "7", "--noise", "0"]).unwrap();
        match cli.command {
            Command::Simulate(a) => {
                assert_eq!(a.seed, 7);
                assert_eq!(a.noise, 0.0);
                assert_eq!(a.waypoints, 10);
                assert_eq!(a.preset, Preset::Excited);
            }
            _ => panic!("wrong command"),
        }
        let cli = Cli::try_parse_from([
            "eih-calib",
            "calibrate",
            "--dataset",
            "d.json",
            "--method",
            "batch",
            "--out",
            "r.json",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Calibrate(CalibrateArgs { method: Method::Batch, .. })));
        assert!(Cli::try_parse_from(["eih-calib", "calibrate", "--dataset", "d.json"]).is_err());
        assert!(Cli::try_parse_from(["eih-calib", "evaluate", "--result", "r.json"]).is_err());
    }

    #[test]
    fn exit_codes() {
        let degenerate = CliError::from(CalibrationError::DegenerateMotion("x".into()));
        assert_eq!(degenerate.exit_code(), 3);
        let singular = CliError::from(EkfError::AtWaypoint {
            waypoint: 4,
            source: Box::new(EkfError::SingularInnovation { id: 1, condition: 1e13 }),
        });
        assert_eq!(singular.exit_code(), 4);
        assert_eq!(CliError::from(EkfError::TooFewWaypoints(1)).exit_code(), 2);
    }

    #[test]
    fn ground_truth_path() {
        assert_eq!(default_ground_truth_path(Path::new("out/run.json")), PathBuf::from("out/run.truth.json"));
        assert_eq!(default_ground_truth_path(Path::new("run")), PathBuf::from("run.truth.json"));
    }

    #[test]
    fn rejects_negative_noise() {
        let dir = tempfile::tempdir().unwrap();
        let args = SimulateArgs {
            out: dir.path().join("d.json"),
            ground_truth: None,
            seed: 0,
            noise: -0.1,
            waypoints: 10,
            preset: Preset::Excited,
            no_survey: false,
        };
        assert_eq!(cmd_simulate(&args).unwrap_err().exit_code(), 2);
        assert!(!args.out.exists());
    }
}
