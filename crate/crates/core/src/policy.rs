//! Driving policy: preview features along a target trajectory and the
//! mapping from features to steering, throttle and brake.

use serde::{Deserialize, Serialize};

use crate::envelope::{estimate_speed, PerformanceEnvelope, SpeedProfile};
use crate::error::{Error, Result};
use crate::geometry::{cross, dot, norm, sub, Path, Point};
use crate::promp::ProMp;
use crate::vehicle::{balance_metric, Action, VehicleParams, VehicleState};

/// How a target trajectory came about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Envelope,
    Sampled,
    Conditioned,
    Scaled,
}

/// Target line and speed profile over a full lap, station by station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTrajectory {
    pub path: Path,
    pub speed: SpeedProfile,
    pub provenance: Provenance,
}

impl TargetTrajectory {
    pub fn new(line: Vec<Point>, speed: SpeedProfile, provenance: Provenance) -> Result<Self> {
        let path = Path::new(line)?;
        if speed.v.len() != path.len() || speed.dt.len() != path.len() {
            return Err(Error::DimensionMismatch("speed profile vs line".into()));
        }
        if speed.v.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::DimensionMismatch("target speed must be positive".into()));
        }
        Ok(Self {
            path,
            speed,
            provenance,
        })
    }

    /// Line driven at the envelope's quasi-steady-state speed.
    pub fn from_envelope(line: Vec<Point>, env: &PerformanceEnvelope) -> Result<Self> {
        let speed = estimate_speed(&line, env)?;
        Self::new(line, speed, Provenance::Envelope)
    }

    /// Mean trajectory of an `(x, y, Δt)` ProMP.
    pub fn from_promp(promp: &ProMp, provenance: Provenance) -> Result<Self> {
        let idx = |name: &str| {
            promp
                .variable_index(name)
                .ok_or_else(|| Error::DimensionMismatch(format!("ProMP lacks variable {name}")))
        };
        let (ix, iy, it) = (idx("x")?, idx("y")?, idx("dt")?);
        let mean = promp.mean_trajectory();
        let line: Vec<Point> = mean[ix].iter().zip(&mean[iy]).map(|(&x, &y)| [x, y]).collect();
        let path = Path::new(line)?;
        let dt: Vec<f64> = mean[it].iter().map(|&d| d.max(1e-4)).collect();
        let speed = SpeedProfile::from_dt(dt, &path.segment);
        Self::new(path.points, speed, provenance)
    }

    pub fn line(&self) -> &[Point] {
        &self.path.points
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    /// Target speed at fractional station `seg + u`.
    pub fn speed_at(&self, seg: usize, u: f64) -> f64 {
        let n = self.len();
        self.speed.v[seg] * (1.0 - u) + self.speed.v[(seg + 1) % n] * u
    }

    pub fn curvature_at(&self, seg: usize, u: f64) -> f64 {
        let n = self.len();
        self.path.curvature[seg] * (1.0 - u) + self.path.curvature[(seg + 1) % n] * u
    }

    /// Point and heading at arc length `s` along the target line.
    pub fn pose_at(&self, s: f64) -> (Point, f64) {
        let (seg, u) = self.segment_at(s);
        let n = self.len();
        let a = self.path.points[seg];
        let b = self.path.points[(seg + 1) % n];
        let d = sub(b, a);
        ([a[0] + u * d[0], a[1] + u * d[1]], d[1].atan2(d[0]))
    }

    /// Segment index and fraction at arc length `s` (wrapping).
    pub fn segment_at(&self, s: f64) -> (usize, f64) {
        let s = s.rem_euclid(self.path.length);
        let seg = self.path.s.partition_point(|&x| x <= s).saturating_sub(1);
        (seg, ((s - self.path.s[seg]) / self.path.segment[seg]).clamp(0.0, 1.0))
    }
}

/// Foot of a point on a closed polyline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Foot {
    pub segment: usize,
    pub u: f64,
    pub s: f64,
    /// Signed offset of the point, positive to the left of the line.
    pub lateral: f64,
    pub distance: f64,
}

/// Projects `q` onto the segments within `window` of `center`.
pub fn project_near(path: &Path, q: Point, center: usize, window: usize) -> Foot {
    let n = path.len();
    let w = window.min(n / 2);
    let mut best: Option<(f64, usize, f64)> = None;
    for k in 0..=2 * w {
        let i = (center + n * 2 + k - w) % n;
        let a = path.points[i];
        let d = sub(path.points[(i + 1) % n], a);
        let u = (dot(sub(q, a), d) / dot(d, d)).clamp(0.0, 1.0);
        let foot = [a[0] + u * d[0], a[1] + u * d[1]];
        let dist = norm(sub(q, foot));
        if best.map_or(true, |(b, _, _)| dist < b) {
            best = Some((dist, i, u));
        }
    }
    let (distance, seg, u) = best.unwrap_or((f64::INFINITY, 0, 0.0));
    let a = path.points[seg];
    let d = sub(path.points[(seg + 1) % n], a);
    Foot {
        segment: seg,
        u,
        s: path.s[seg] + u * path.segment[seg],
        lateral: cross(d, sub(q, a)) / norm(d),
        distance,
    }
}

/// Perception part of the features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Perception {
    pub speed: f64,
    pub ax: f64,
    pub ay: f64,
    pub yaw_rate: f64,
    pub balance: f64,
}

/// Features at fixed preview horizons plus perception.
///
/// Flattened order (see [`FeatureVector::to_vec`]): lateral offsets (m),
/// speed differences (m/s), target curvatures (1/m), one entry per horizon
/// each; then local path curvature (1/m), speed (m/s), longitudinal and
/// lateral acceleration (m/s²), yaw rate (rad/s), balance (rad).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Preview distances (m), strictly increasing.
    pub distances: Vec<f64>,
    /// Predicted offset of the vehicle from the target line, left positive.
    pub lateral: Vec<f64>,
    /// Target speed minus current speed at each horizon.
    pub speed_error: Vec<f64>,
    pub target_curvature: Vec<f64>,
    /// Initial curvature of the cubic from the current pose to the target
    /// line at the last horizon.
    pub path_curvature: f64,
    /// Curvature the vehicle currently drives, yaw rate over speed.
    pub vehicle_curvature: f64,
    pub perception: Perception,
    /// Target station the vehicle is nearest to.
    pub station: usize,
    /// Simulation time; used only by replaying policies.
    pub time: f64,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let p = &self.perception;
        self.lateral
            .iter()
            .chain(&self.speed_error)
            .chain(&self.target_curvature)
            .copied()
            .chain([self.path_curvature, p.speed, p.ax, p.ay, p.yaw_rate, p.balance])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Preview horizons and search window used when computing features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Preview times (s) at the current speed.
    pub horizons: Vec<f64>,
    /// Speed floor used to turn preview times into distances (m/s).
    pub min_preview_speed: f64,
    /// Segments searched around the expected foot point.
    pub search_window: usize,
    /// Farther than this from the target line the vehicle counts as lost (m).
    pub max_distance: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            horizons: vec![0.3, 0.8, 1.5, 2.5],
            min_preview_speed: 5.0,
            search_window: 25,
            max_distance: 30.0,
        }
    }
}

/// Position after driving `d` metres on the current curvature along the
/// course angle.
fn predict(state: &VehicleState, d: f64) -> Point {
    let u = state.vx.max(1.0);
    let kappa = state.yaw_rate / u;
    let course = state.yaw + state.vy.atan2(u);
    let a = kappa * d;
    let (lx, ly) = if a.abs() < 1e-6 {
        (d, 0.5 * kappa * d * d)
    } else {
        (a.sin() / kappa, (1.0 - a.cos()) / kappa)
    };
    let (sin, cos) = course.sin_cos();
    [state.x + lx * cos - ly * sin, state.y + lx * sin + ly * cos]
}

/// Preview and perception features of a state relative to a target.
///
/// `hint` is the target station found on the previous call; without it the
/// whole line is searched.
pub fn compute_features(
    state: &VehicleState,
    accel: (f64, f64),
    target: &TargetTrajectory,
    config: &FeatureConfig,
    hint: Option<usize>,
) -> Result<FeatureVector> {
    let path = &target.path;
    let n = path.len();
    let here = [state.x, state.y];
    let foot = match hint {
        Some(h) => {
            let f = project_near(path, here, h, config.search_window);
            if f.distance > config.max_distance {
                project_near(path, here, 0, n)
            } else {
                f
            }
        }
        None => project_near(path, here, 0, n),
    };
    if !(foot.distance <= config.max_distance) {
        return Err(Error::LocalizationLost);
    }
    let speed = state.vx;
    let reach = speed.max(config.min_preview_speed);
    let spacing = path.length / n as f64;
    let mut out = FeatureVector {
        station: if foot.u < 0.5 { foot.segment } else { (foot.segment + 1) % n },
        vehicle_curvature: state.yaw_rate / state.vx.max(1.0),
        perception: Perception {
            speed,
            ax: accel.0,
            ay: accel.1,
            yaw_rate: state.yaw_rate,
            balance: balance_metric(state),
        },
        ..FeatureVector::default()
    };
    for &t in &config.horizons {
        let d = reach * t;
        let q = predict(state, d);
        let expect = foot.segment + (d / spacing).round() as usize;
        let f = project_near(path, q, expect % n, config.search_window);
        out.distances.push(d);
        out.lateral.push(f.lateral);
        out.speed_error.push(target.speed_at(f.segment, f.u) - speed);
        out.target_curvature.push(target.curvature_at(f.segment, f.u));
    }
    // cubic from the current pose to the target pose at the last horizon
    if let Some(&d) = out.distances.last() {
        let (p, heading) = target.pose_at(foot.s + d);
        let (sin, cos) = state.yaw.sin_cos();
        let rel = sub(p, here);
        let x = rel[0] * cos + rel[1] * sin;
        let y = -rel[0] * sin + rel[1] * cos;
        let theta = crate::geometry::wrap_angle(heading - state.yaw);
        out.path_curvature = if x > 1e-3 && theta.abs() < 1.4 {
            2.0 * (3.0 * y - x * theta.tan()) / (x * x)
        } else {
            0.0
        };
    }
    Ok(out)
}

/// Anything that maps features to actions. Implementations must be
/// deterministic functions of the features and their own configuration.
pub trait DrivingPolicy {
    fn select_action(&self, features: &FeatureVector) -> Action;
}

/// Deterministic preview controller standing in for a learned policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreviewController {
    /// Weight of each preview horizon in the steering correction.
    pub weights: Vec<f64>,
    /// Throttle held at zero speed error.
    pub hold_throttle: f64,
    /// Throttle per m/s² of demanded acceleration.
    pub throttle_gain: f64,
    /// Brake per m/s² of demanded deceleration.
    pub brake_gain: f64,
    /// Which horizon's speed error sets the demanded acceleration.
    pub speed_horizon: usize,
    /// Preview time of that horizon (s); demand = error / time.
    pub speed_time: f64,
    /// The controller's model of the car: wheelbase (m), understeer
    /// gradient (rad per m/s²), lateral grip (m/s²) and steering limit.
    pub wheelbase: f64,
    pub understeer: f64,
    pub lateral_grip: f64,
    pub max_steer: f64,
    /// Engine power (W) and rear-axle traction limit (N), used to tell
    /// whether full throttle can reach the friction limit at all.
    pub power: f64,
    pub traction: f64,
}

impl Default for PreviewController {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::default())
    }
}

impl PreviewController {
    pub fn for_vehicle(p: &VehicleParams) -> Self {
        let env = p.envelope();
        Self {
            weights: vec![0.1, 0.3, 0.4, 0.2],
            hold_throttle: 0.15,
            throttle_gain: 1.0 / 6.0,
            brake_gain: 1.0 / env.ax_brake,
            speed_horizon: 0,
            speed_time: 0.3,
            wheelbase: p.wheelbase(),
            understeer: p.understeer_gradient(),
            lateral_grip: env.ay_max,
            max_steer: p.max_steer,
            power: p.power,
            traction: p.drive_force(0.0),
        }
    }
}

impl DrivingPolicy for PreviewController {
    fn select_action(&self, f: &FeatureVector) -> Action {
        // curvature that would bring each predicted point onto the line
        let correction: f64 = self
            .weights
            .iter()
            .zip(&f.lateral)
            .zip(&f.distances)
            .map(|((w, e), d)| w * (-2.0 * e / (d * d)))
            .sum();
        let kappa = if f.lateral.is_empty() { 0.0 } else { f.vehicle_curvature + correction };
        let v = f.perception.speed.max(0.0);
        let steer = (self.wheelbase * kappa).atan() + self.understeer * v * v * kappa;

        let error = f.speed_error.get(self.speed_horizon).copied().unwrap_or(0.0);
        let demand = error / self.speed_time;
        let lat = (f.perception.ay / self.lateral_grip).abs().min(1.0);
        let residual = (1.0 - lat * lat).sqrt();
        let switch = -self.hold_throttle / self.throttle_gain;
        let (throttle, brake) = if demand >= switch {
            ((self.hold_throttle + self.throttle_gain * demand).min(1.0), 0.0)
        } else {
            (0.0, self.brake_gain * (switch - demand))
        };
        let clamp = |v: f64| if residual < 1.0 { v.min(residual.max(0.2)) } else { v };
        // full throttle only uses the whole traction budget while traction
        // limited; above that speed the engine cannot saturate the tire
        let drive = (self.power / v.max(1.0)).min(self.traction).max(1e-9);
        let throttle_cap = (residual * self.traction / drive).max(0.2);
        Action {
            steer,
            throttle: throttle.min(throttle_cap),
            brake: clamp(brake),
        }
        .saturate(self.max_steer)
    }
}

/// Replays recorded actions by simulation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedPolicy {
    /// `(time, action)` pairs sorted by time.
    pub actions: Vec<(f64, Action)>,
}

impl DrivingPolicy for RecordedPolicy {
    fn select_action(&self, f: &FeatureVector) -> Action {
        let k = self.actions.partition_point(|(t, _)| *t <= f.time);
        self.actions
            .get(k.saturating_sub(1))
            .map_or(Action::default(), |(_, a)| *a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_target(v: f64) -> TargetTrajectory {
        // long thin rectangle; the bottom edge is a 2 km straight
        let mut line = Vec::new();
        for i in 0..800 {
            line.push([i as f64 * 2.5, 0.0]);
        }
        for i in 0..8 {
            line.push([2000.0, i as f64 * 2.5]);
        }
        for i in 0..800 {
            line.push([2000.0 - i as f64 * 2.5, 20.0]);
        }
        for i in 0..8 {
            line.push([0.0, 20.0 - i as f64 * 2.5]);
        }
        let n = line.len();
        let path = Path::new(line.clone()).unwrap();
        let speed = SpeedProfile::from_speeds(vec![v; n], &path.segment);
        TargetTrajectory::new(line, speed, Provenance::Envelope).unwrap()
    }

    #[test]
    fn on_line_at_target_speed_gives_zero_errors() {
        let target = straight_target(20.0);
        let s = VehicleState::at(500.0, 0.0, 0.0, 20.0);
        let f = compute_features(&s, (0.0, 0.0), &target, &FeatureConfig::default(), None).unwrap();
        assert!(f.lateral.iter().all(|e| e.abs() < 1e-12));
        assert!(f.speed_error.iter().all(|e| e.abs() < 1e-12));
        assert!(f.path_curvature.abs() < 1e-12);
    }

    #[test]
    fn parallel_offset_is_positive_to_the_left() {
        let target = straight_target(20.0);
        let s = VehicleState::at(500.0, 1.0, 0.0, 20.0);
        let f = compute_features(&s, (0.0, 0.0), &target, &FeatureConfig::default(), None).unwrap();
        assert!(f.lateral.iter().all(|e| (e - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_features_hold_throttle() {
        let c = PreviewController::default();
        let f = FeatureVector {
            distances: vec![6.0, 16.0, 30.0, 50.0],
            lateral: vec![0.0; 4],
            speed_error: vec![0.0; 4],
            target_curvature: vec![0.0; 4],
            ..Default::default()
        };
        let a = c.select_action(&f);
        assert_eq!(a, Action { steer: 0.0, throttle: c.hold_throttle, brake: 0.0 });
    }

    #[test]
    fn large_speed_deficit_is_full_throttle() {
        let c = PreviewController::default();
        let f = FeatureVector {
            distances: vec![6.0, 16.0, 30.0, 50.0],
            lateral: vec![0.0; 4],
            speed_error: vec![15.0; 4],
            target_curvature: vec![0.0; 4],
            ..Default::default()
        };
        let a = c.select_action(&f);
        assert_eq!((a.throttle, a.brake), (1.0, 0.0));
    }

    #[test]
    fn left_offset_steers_right() {
        let c = PreviewController::default();
        let f = FeatureVector {
            distances: vec![6.0, 16.0, 30.0, 50.0],
            lateral: vec![1.0; 4],
            speed_error: vec![0.0; 4],
            target_curvature: vec![0.0; 4],
            perception: Perception { speed: 20.0, ..Default::default() },
            ..Default::default()
        };
        assert!(c.select_action(&f).steer < 0.0);
    }

    #[test]
    fn recorded_policy_replays_by_time() {
        let p = RecordedPolicy {
            actions: vec![
                (0.0, Action { steer: 0.1, throttle: 0.5, brake: 0.0 }),
                (1.0, Action { steer: -0.1, throttle: 0.0, brake: 0.3 }),
            ],
        };
        let at = |t| p.select_action(&FeatureVector { time: t, ..Default::default() });
        assert_eq!(at(0.5).steer, 0.1);
        assert_eq!(at(1.5).brake, 0.3);
    }
}
