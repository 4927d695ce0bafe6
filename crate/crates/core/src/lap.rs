//! Closed-loop lap simulation and lap logs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Track;
use crate::policy::{compute_features, DrivingPolicy, FeatureConfig, TargetTrajectory};
use crate::vehicle::{balance_metric, body_accelerations, step, Action, VehicleParams, VehicleState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    /// Simulated time budget (s).
    pub timeout: f64,
    /// Distance beyond a border before the lap counts as failed (m).
    pub off_track_tolerance: f64,
    pub vehicle: VehicleParams,
    pub features: FeatureConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            timeout: 300.0,
            off_track_tolerance: 0.5,
            vehicle: VehicleParams::default(),
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LapStatus {
    Completed,
    OffTrack,
    Timeout,
    Blowup,
    LocalizationLost,
}

/// One logged integration step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LapSample {
    pub t: f64,
    pub state: VehicleState,
    pub action: Action,
    /// Arc length along the track reference.
    pub s: f64,
    pub station: usize,
    /// Offset from the track reference, left positive.
    pub lateral: f64,
    pub balance: f64,
    pub off_track: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LapLog {
    pub samples: Vec<LapSample>,
    pub status: LapStatus,
    pub lap_time: Option<f64>,
    /// Distance covered along the track reference (m).
    pub distance: f64,
    pub exit_station: Option<usize>,
    /// Steps with throttle and brake pressed together.
    pub co_activation: usize,
}

/// Per-lap summary record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LapSummary {
    pub status: LapStatus,
    pub completed: bool,
    pub lap_time: Option<f64>,
    pub distance: f64,
    pub max_abs_balance: f64,
    pub exit_station: Option<usize>,
    pub exit_s: Option<f64>,
}

impl LapLog {
    pub fn completed(&self) -> bool {
        self.status == LapStatus::Completed
    }

    pub fn max_abs_balance(&self) -> f64 {
        self.samples.iter().fold(0.0, |a, s| a.max(s.balance.abs()))
    }

    pub fn summary(&self, track: &Track) -> LapSummary {
        LapSummary {
            status: self.status,
            completed: self.completed(),
            lap_time: self.lap_time,
            distance: self.distance,
            max_abs_balance: self.max_abs_balance(),
            exit_station: self.exit_station,
            exit_s: self.exit_station.map(|i| track.reference.s[i]),
        }
    }
}

/// Drives one flying lap: the car starts on the first target station at
/// the target speed and runs until it crosses the start line again, leaves
/// the track, loses the target line, or the time budget is spent.
pub fn run_lap(
    policy: &dyn DrivingPolicy,
    target: &TargetTrajectory,
    track: &Track,
    config: &SimConfig,
) -> Result<LapLog> {
    if !(config.dt > 0.0 && config.dt <= 0.02) {
        return Err(Error::InvalidTimeStep(config.dt));
    }
    let length = track.length();
    let (p0, heading) = target.pose_at(0.0);
    let mut state = VehicleState::at(p0[0], p0[1], heading, target.speed.v[0]);
    let start = track.locate(p0, None, 0);
    let mut hint_track = start.station;
    let mut hint_target = Some(0);
    let mut last_s = start.s;
    let mut distance = 0.0;
    let mut action = Action::default();
    let mut samples = Vec::new();
    let mut co_activation = 0;
    let steps = (config.timeout / config.dt).floor() as usize;
    let mut status = LapStatus::Timeout;
    let mut lap_time = None;
    let mut exit_station = None;

    for k in 0..steps {
        let t = k as f64 * config.dt;
        let accel = body_accelerations(&config.vehicle, &state, &action);
        let mut features = match compute_features(&state, accel, target, &config.features, hint_target) {
            Ok(f) => f,
            Err(_) => {
                status = LapStatus::LocalizationLost;
                exit_station = Some(hint_track);
                break;
            }
        };
        features.time = t;
        hint_target = Some(features.station);
        action = policy.select_action(&features).saturate(config.vehicle.max_steer);
        if action.co_active() {
            co_activation += 1;
        }
        let next = match step(&config.vehicle, &state, &action, config.dt) {
            Ok(s) => s,
            Err(_) => {
                status = LapStatus::Blowup;
                exit_station = Some(hint_track);
                break;
            }
        };
        let loc = track.locate([next.x, next.y], Some(hint_track), 12);
        hint_track = loc.station;
        let mut ds = loc.s - last_s;
        if ds < -length / 2.0 {
            ds += length;
        } else if ds > length / 2.0 {
            ds -= length;
        }
        last_s = loc.s;
        let st = loc.station;
        let off = loc.lateral > track.left_width[st] + config.off_track_tolerance
            || loc.lateral < -track.right_width[st] - config.off_track_tolerance;
        samples.push(LapSample {
            t: t + config.dt,
            state: next,
            action,
            s: loc.s,
            station: st,
            lateral: loc.lateral,
            balance: balance_metric(&next),
            off_track: off,
        });
        state = next;
        if off {
            status = LapStatus::OffTrack;
            exit_station = Some(st);
            distance += ds;
            break;
        }
        if distance + ds >= length {
            let frac = if ds > 0.0 { (length - distance) / ds } else { 1.0 };
            lap_time = Some(t + frac * config.dt);
            distance = length;
            status = LapStatus::Completed;
            break;
        }
        distance += ds;
    }
    if status == LapStatus::Timeout && steps > 0 {
        exit_station = Some(hint_track);
    }
    Ok(LapLog {
        samples,
        status,
        lap_time,
        distance: distance.max(0.0),
        exit_station,
        co_activation,
    })
}
