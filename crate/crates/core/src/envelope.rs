//! Quasi-steady-state speed profiles from a vehicle performance envelope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Path, Point};

/// Curvature floor used on straights (1/m).
pub const KAPPA_FLOOR: f64 = 1e-5;

/// Speed-dependent acceleration limits of the vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerformanceEnvelope {
    /// Lateral acceleration limit (m/s²).
    pub ay_max: f64,
    /// Available longitudinal acceleration as `(speed m/s, accel m/s²)`,
    /// sorted by speed and linearly interpolated.
    pub ax_acc: Vec<(f64, f64)>,
    /// Braking deceleration limit (m/s², positive).
    pub ax_brake: f64,
    /// Top speed (m/s).
    pub v_max: f64,
    /// Fraction in (0, 1] applied to the acceleration limits.
    pub scale: f64,
}

impl Default for PerformanceEnvelope {
    /// Matches the default plant in [`crate::vehicle::VehicleParams`].
    fn default() -> Self {
        crate::vehicle::VehicleParams::default().envelope()
    }
}

impl PerformanceEnvelope {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidEnvelope(m.to_string()));
        if !(self.ay_max > 0.0 && self.ax_brake > 0.0 && self.v_max > 0.0) {
            return bad("limits must be positive");
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return bad("scale must lie in (0, 1]");
        }
        if self.ax_acc.is_empty() || self.ax_acc.iter().any(|&(_, a)| !(a > 0.0)) {
            return bad("acceleration table must be non-empty and positive");
        }
        if self.ax_acc.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("acceleration table speeds must increase");
        }
        let falling = self.ax_acc.windows(2).position(|w| w[1].1 < w[0].1 - 1e-12);
        let rises_again = falling.is_some_and(|k| {
            self.ax_acc[k..].windows(2).any(|w| w[1].1 > w[0].1 + 1e-12)
        });
        if rises_again {
            return bad("acceleration must not increase beyond the power-limited speed");
        }
        Ok(())
    }

    /// Unscaled available acceleration at speed `v`.
    pub fn acceleration(&self, v: f64) -> f64 {
        let table = &self.ax_acc;
        let first = table[0];
        let last = table[table.len() - 1];
        if v <= first.0 {
            return first.1;
        }
        if v >= last.0 {
            return last.1;
        }
        let k = table.partition_point(|&(s, _)| s <= v);
        let (v0, a0) = table[k - 1];
        let (v1, a1) = table[k];
        a0 + (a1 - a0) * (v - v0) / (v1 - v0)
    }

    pub fn with_scale(&self, scale: f64) -> Self {
        Self {
            scale,
            ..self.clone()
        }
    }

    /// Envelope with every limit multiplied by `factor` (scale untouched).
    pub fn scaled_limits(&self, factor: f64) -> Self {
        Self {
            ay_max: self.ay_max * factor,
            ax_acc: self.ax_acc.iter().map(|&(v, a)| (v, a * factor)).collect(),
            ax_brake: self.ax_brake * factor,
            ..self.clone()
        }
    }

    /// Curvature-limited speed.
    pub fn corner_speed(&self, kappa: f64) -> f64 {
        (self.scale * self.ay_max / kappa.abs().max(KAPPA_FLOOR))
            .sqrt()
            .min(self.v_max)
    }

    /// Share of the longitudinal limit left by the friction ellipse at the
    /// given speed and curvature.
    fn ellipse_residual(&self, v: f64, kappa: f64) -> f64 {
        let lat = v * v * kappa.abs() / (self.scale * self.ay_max);
        (1.0 - lat * lat).max(0.0).sqrt()
    }
}

/// Target speed and traversal time at each station of a closed line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub v: Vec<f64>,
    /// Time to travel from station `i` to station `i + 1`.
    pub dt: Vec<f64>,
    pub lap_time: f64,
}

impl SpeedProfile {
    /// Builds `dt` from segment lengths and mean segment speeds.
    pub fn from_speeds(v: Vec<f64>, segment: &[f64]) -> Self {
        let n = v.len();
        let dt: Vec<f64> = (0..n)
            .map(|i| 2.0 * segment[i] / (v[i] + v[(i + 1) % n]))
            .collect();
        let lap_time = dt.iter().sum();
        Self { v, dt, lap_time }
    }

    /// Inverse of [`Self::from_speeds`] for a given line: speeds consistent
    /// with per-segment times, solved in the least-squares sense around the
    /// loop by averaging the segment speeds adjacent to each station.
    pub fn from_dt(dt: Vec<f64>, segment: &[f64]) -> Self {
        let n = dt.len();
        let seg_v: Vec<f64> = (0..n).map(|i| segment[i] / dt[i].max(1e-6)).collect();
        let v: Vec<f64> = (0..n)
            .map(|i| 0.5 * (seg_v[i] + seg_v[(i + n - 1) % n]))
            .collect();
        let lap_time = dt.iter().sum();
        Self { v, dt, lap_time }
    }
}

/// Quasi-steady-state speed profile: curvature limit, then forward
/// (acceleration) and backward (braking) passes under a friction ellipse,
/// repeated around the closed loop until the start/finish speed agrees.
pub fn estimate_speed(line: &[Point], env: &PerformanceEnvelope) -> Result<SpeedProfile> {
    env.validate()?;
    if line.len() < 4 {
        return Err(Error::DegenerateLine);
    }
    let path = Path::new(line.to_vec()).map_err(|_| Error::DegenerateLine)?;
    if !(path.length > 0.0) {
        return Err(Error::DegenerateLine);
    }
    Ok(speed_profile_on(&path, env))
}

pub(crate) fn speed_profile_on(path: &Path, env: &PerformanceEnvelope) -> SpeedProfile {
    let v = speed_limits(&path.curvature, &path.segment, env, None);
    SpeedProfile::from_speeds(v, &path.segment)
}

/// Core passes. `cap` optionally replaces the curvature limit with a
/// precomputed per-station ceiling.
pub(crate) fn speed_limits(
    kappa: &[f64],
    segment: &[f64],
    env: &PerformanceEnvelope,
    cap: Option<&[f64]>,
) -> Vec<f64> {
    let n = kappa.len();
    let v_lim: Vec<f64> = match cap {
        Some(c) => c.to_vec(),
        None => kappa.iter().map(|&k| env.corner_speed(k)).collect(),
    };
    let start = (0..n)
        .min_by(|&a, &b| v_lim[a].total_cmp(&v_lim[b]))
        .unwrap_or(0);

    let mut fwd = v_lim.clone();
    let mut bwd = v_lim.clone();
    for _sweep in 0..4 {
        let mut changed = false;
        for k in 1..=n {
            let i = (start + k) % n;
            let prev = (start + k - 1) % n;
            let vp = fwd[prev];
            let a = env.scale * env.acceleration(vp) * env.ellipse_residual(vp, kappa[prev]);
            let reach = (vp * vp + 2.0 * a * segment[prev]).sqrt();
            if reach < fwd[i] - 1e-12 {
                fwd[i] = reach;
                changed = true;
            }
        }
        for k in 1..=n {
            let i = (start + n - k) % n;
            let next = (i + 1) % n;
            let vn = bwd[next];
            let a = env.scale * env.ax_brake * env.ellipse_residual(vn, kappa[next]);
            let reach = (vn * vn + 2.0 * a * segment[i]).sqrt();
            if reach < bwd[i] - 1e-12 {
                bwd[i] = reach;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    fwd.iter().zip(&bwd).map(|(a, b)| a.min(*b).max(1e-3)).collect()
}

/// Preparation/warm-up schedule for the envelope scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSchedule {
    pub start: f64,
    pub step: f64,
}

impl Default for EnvelopeSchedule {
    fn default() -> Self {
        Self {
            start: 0.7,
            step: 0.1,
        }
    }
}

impl EnvelopeSchedule {
    /// All scales visited from `start` up to 1.0.
    pub fn scales(&self) -> Vec<f64> {
        let mut out = vec![self.start.min(1.0)];
        while *out.last().unwrap() < 1.0 && self.step > 0.0 {
            out.push(step_scale(*out.last().unwrap(), self.step));
        }
        out
    }
}

fn step_scale(scale: f64, step: f64) -> f64 {
    (((scale + step) * 1e9).round() / 1e9).min(1.0)
}

/// One warm-up step: raises the envelope scale, capped at 1.0.
pub fn expand_envelope(env: &PerformanceEnvelope, schedule: &EnvelopeSchedule) -> PerformanceEnvelope {
    if env.scale >= 1.0 {
        return env.clone();
    }
    env.with_scale(step_scale(env.scale, schedule.step))
}
