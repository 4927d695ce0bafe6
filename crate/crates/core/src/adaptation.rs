//! Lap-by-lap adaptation of the target trajectory: failure analysis,
//! conditioning observations on line and speed, and speed scaling on
//! straights.

use log::{debug, info};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::envelope::{estimate_speed, PerformanceEnvelope, SpeedProfile};
use crate::error::{Error, Result};
use crate::geometry::{Point, Track, TrackAnalysis};
use crate::lap::{run_lap, LapLog, LapStatus, LapSummary, SimConfig};
use crate::policy::{DrivingPolicy, Provenance, TargetTrajectory};
use crate::promp::{MaskShape, Observation, ProMp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlipConfig {
    /// |balance| above this counts as extreme (rad).
    pub balance_threshold: f64,
    /// Slip angle magnitude above this counts as extreme (rad).
    pub slip_threshold: f64,
    /// Minimum duration of an episode (s).
    pub dwell: f64,
}

impl Default for SlipConfig {
    fn default() -> Self {
        Self {
            balance_threshold: 0.06,
            slip_threshold: 0.12,
            dwell: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    /// Speed added above the achieved or full-envelope speed (m/s).
    pub margin: f64,
    /// Length of the cosine blend-in at the start of a straight (m).
    pub blend: f64,
    /// Straights shorter than this are left alone (m).
    pub min_length: f64,
    /// Share of the full braking limit used to fall back to corner speed.
    pub brake_share: f64,
    /// Throttle at or above this counts as full.
    pub full_throttle: f64,
    /// Lateral acceleration below which the car counts as driving
    /// straight when measuring throttle coverage (m/s²).
    pub straight_ay: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            margin: 2.0,
            blend: 20.0,
            min_length: 100.0,
            brake_share: 0.9,
            full_throttle: 0.99,
            straight_ay: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    /// Number of adaptation iterations after the initial lap.
    pub budget: usize,
    /// Borders are inset by this much to form the permissible corridor (m).
    pub corridor_margin: f64,
    /// Line-correction targets sit this far inside the corridor (m).
    pub pull_inset: f64,
    /// Standard deviation of line corrections after a failure (m).
    pub line_std: f64,
    /// Standard deviation of corrections on completed laps (m).
    pub mild_std: f64,
    /// Standard deviation of Δt observations, as a share of Δt.
    pub speed_std: f64,
    /// Speed reduction per adaptation, as a share of local speed.
    pub decrement: f64,
    /// Lowest target speed, as a share of the envelope-limited speed.
    pub floor: f64,
    /// Consecutive floor hits at one corner before giving up.
    pub floor_hits: usize,
    /// Prior standard deviation floor of the Δt weights, as a share of
    /// their mean. Keeps speed observations effective when the sampled
    /// lines barely disagree on timing.
    pub speed_prior_share: f64,
    /// Completed-lap excursions smaller than this are ignored (m).
    pub excursion_tolerance: f64,
    /// Masking bandwidth in basis indices.
    pub bandwidth: usize,
    pub mask_shape: MaskShape,
    /// Condition each iteration against the masked prior covariance rather
    /// than the accumulated posterior.
    pub covariance_reset: bool,
    pub slip: SlipConfig,
    pub scaling: ScalingConfig,
    pub enable_scaling: bool,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            budget: 40,
            corridor_margin: 1.0,
            pull_inset: 0.5,
            line_std: 0.25,
            mild_std: 0.5,
            speed_std: 0.02,
            decrement: 0.05,
            floor: 0.4,
            floor_hits: 3,
            speed_prior_share: 0.05,
            excursion_tolerance: 0.1,
            bandwidth: 6,
            mask_shape: MaskShape::RaisedCosine,
            covariance_reset: true,
            slip: SlipConfig::default(),
            scaling: ScalingConfig::default(),
            enable_scaling: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LineCorrection,
    SpeedReduction,
    EnvelopeViolation,
    SpeedScaling,
    ScalingLocked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationEvent {
    pub kind: EventKind,
    pub station: usize,
    pub s: f64,
    pub observation: Option<Observation>,
    pub reason: String,
}

/// Lateral interval `[lo, hi]` of the permissible corridor at each station.
pub fn corridor(track: &Track, margin: f64) -> Vec<(f64, f64)> {
    (0..track.n_stations()).map(|i| track.corridor(i, margin)).collect()
}

fn violation(d: f64, (lo, hi): (f64, f64)) -> f64 {
    (d - hi).max(lo - d).max(0.0)
}

/// Station index of the ProMP basis grid, as arc length.
fn station_s(promp: &ProMp, i: usize) -> f64 {
    promp.basis.station(i)
}

/// Corner a failure is attributed to: the corner containing the exit
/// station, the corner whose brake zone contains it, or the last corner
/// before it.
pub fn failing_corner(analysis: &TrackAnalysis, exit: usize) -> Option<usize> {
    if let Some(c) = analysis.corner_at(exit) {
        return Some(c);
    }
    let n = analysis.n_stations;
    for (k, c) in analysis.corners.iter().enumerate() {
        let brake = analysis.brake_station(k);
        let lead = (c.span.start + n - brake) % n;
        if (exit + n - brake) % n < lead {
            return Some(k);
        }
    }
    analysis.corner_at_or_before(exit)
}

fn line_observation(
    promp: &ProMp,
    track: &Track,
    station: usize,
    target_d: f64,
    std: f64,
) -> Observation {
    let p = track.reference.points[station];
    let nrm = track.normal(station);
    let goal = [p[0] + nrm[0] * target_d, p[1] + nrm[1] * target_d];
    let vars = vec![
        promp.variable_index("x").unwrap_or(0),
        promp.variable_index("y").unwrap_or(1),
    ];
    Observation::diagonal(station_s(promp, station), vars, goal.to_vec(), &[std, std])
}

/// After a failed lap: the largest corridor violation of the target line
/// before the apex of the failing corner, and one `(x, y)` observation
/// pulling the line back inside. Empty when the line stays inside.
pub fn analyse_driving_line(
    log: &LapLog,
    analysis: &TrackAnalysis,
    promp: &ProMp,
    track: &Track,
    config: &AdaptationConfig,
) -> Vec<Observation> {
    let Some(exit) = log.exit_station else {
        return Vec::new();
    };
    let Some(c) = failing_corner(analysis, exit) else {
        return Vec::new();
    };
    let n = analysis.n_stations;
    let apex = analysis.corners[c].apex;
    let count = analysis.corners.len();
    let from = if count > 1 {
        analysis.corners[(c + count - 1) % count].apex + 1
    } else {
        apex + n - n / 2
    };
    let span = (apex + n - from % n) % n + 1;
    let mean = promp.mean_trajectory();
    let (ix, iy) = (
        promp.variable_index("x").unwrap_or(0),
        promp.variable_index("y").unwrap_or(1),
    );
    let line: Vec<Point> = mean[ix].iter().zip(&mean[iy]).map(|(&x, &y)| [x, y]).collect();
    let offsets = track.lateral_offsets(&line);
    let bounds = corridor(track, config.corridor_margin);
    let worst = (0..span)
        .map(|k| (from + k) % n)
        .map(|i| (i, violation(offsets[i], bounds[i])))
        .filter(|&(_, v)| v > 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let Some((i, _)) = worst else {
        return Vec::new();
    };
    let (lo, hi) = bounds[i];
    let inset = config.pull_inset.min(0.5 * (hi - lo).max(0.0));
    let target = offsets[i].clamp(lo + inset, hi - inset);
    vec![line_observation(promp, track, i, target, config.line_std)]
}

/// Result of a slip check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlipTrigger {
    pub station: usize,
    pub worst: f64,
}

/// Flags episodes where balance or slip angle stayed above threshold for
/// longer than the dwell time. Reports the worst station.
pub fn slip_check(log: &LapLog, config: &SlipConfig) -> Option<SlipTrigger> {
    let mut best: Option<SlipTrigger> = None;
    let mut start: Option<f64> = None;
    let mut episode: Option<SlipTrigger> = None;
    for s in &log.samples {
        let st = &s.state;
        let gated = st.vx > crate::vehicle::MIN_METRIC_SPEED;
        let slip = st.slip_front.abs().max(st.slip_rear.abs());
        let excess = (s.balance.abs() / config.balance_threshold).max(slip / config.slip_threshold);
        if gated && excess > 1.0 {
            let t0 = *start.get_or_insert(s.t);
            if episode.map_or(true, |e| excess > e.worst) {
                episode = Some(SlipTrigger {
                    station: s.station,
                    worst: excess,
                });
            }
            if s.t - t0 >= config.dwell {
                if let Some(e) = episode {
                    if best.map_or(true, |b| e.worst > b.worst) {
                        best = Some(e);
                    }
                }
            }
        } else {
            start = None;
            episode = None;
        }
    }
    best
}

/// Three Δt observations at entry, apex and exit of a corner that slow the
/// local target speed by the configured decrement.
pub fn adapt_speed(
    promp: &ProMp,
    analysis: &TrackAnalysis,
    corner: usize,
    envelope_speed: &[f64],
    config: &AdaptationConfig,
) -> Result<Vec<Observation>> {
    let c = &analysis.corners[corner];
    let n = analysis.n_stations;
    let it = promp
        .variable_index("dt")
        .ok_or_else(|| Error::DimensionMismatch("ProMP lacks variable dt".into()))?;
    let exit = (c.span.end + n - 1) % n;
    let seg = promp.basis.length / n as f64;
    let mut out = Vec::with_capacity(3);
    for i in [c.span.start, c.apex, exit] {
        let s = station_s(promp, i);
        let dt = promp.mean_at(s, &[it])[0].max(1e-4);
        let goal = dt / (1.0 - config.decrement);
        if i == c.apex && seg / goal < config.floor * envelope_speed[i] {
            return Err(Error::FloorReached { corner });
        }
        out.push(Observation::diagonal(s, vec![it], vec![goal], &[config.speed_std * dt]));
    }
    Ok(out)
}

/// After a completed lap: one mild line correction at the peak of every
/// excursion of the driven path beyond the corridor, ordered by station.
pub fn check_in_envelope(
    log: &LapLog,
    promp: &ProMp,
    track: &Track,
    config: &AdaptationConfig,
) -> Vec<Observation> {
    let bounds = corridor(track, config.corridor_margin);
    let mut peaks: Vec<(usize, f64, f64)> = Vec::new();
    let mut current: Option<(usize, f64, f64)> = None;
    for s in &log.samples {
        let v = violation(s.lateral, bounds[s.station]);
        if v > config.excursion_tolerance {
            if current.map_or(true, |c| v > c.1) {
                current = Some((s.station, v, s.lateral));
            }
        } else if let Some(c) = current.take() {
            peaks.push(c);
        }
    }
    peaks.extend(current);
    peaks.sort_by_key(|p| p.0);
    peaks.dedup_by_key(|p| p.0);

    let mean = promp.mean_trajectory();
    let (ix, iy) = (
        promp.variable_index("x").unwrap_or(0),
        promp.variable_index("y").unwrap_or(1),
    );
    peaks
        .into_iter()
        .map(|(i, v, lateral)| {
            let p = track.reference.points[i];
            let nrm = track.normal(i);
            let d = (mean[ix][i] - p[0]) * nrm[0] + (mean[iy][i] - p[1]) * nrm[1];
            let (lo, hi) = bounds[i];
            let push = if lateral > hi { -v } else { v };
            let target = (d + push).clamp(lo.min(hi), hi.max(lo));
            line_observation(promp, track, i, target, config.mild_std)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Speed scaling

/// A straight whose target speed was raised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledStraight {
    pub straight: usize,
    /// First station of the raised region.
    pub start: usize,
    /// Raised target speed from `start` on, one value per station.
    pub speeds: Vec<f64>,
}

/// Persistent speed-scaling state across iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedScaler {
    pub config: ScalingConfig,
    /// Full envelope used for the speed ceiling and braking fallback.
    pub envelope: PerformanceEnvelope,
    pub scaled: Vec<ScaledStraight>,
    pub locked: Vec<usize>,
}

impl SpeedScaler {
    pub fn new(config: ScalingConfig, envelope: PerformanceEnvelope) -> Self {
        Self {
            config,
            envelope: envelope.with_scale(1.0),
            scaled: Vec::new(),
            locked: Vec::new(),
        }
    }

    pub fn is_locked(&self, straight: usize) -> bool {
        self.locked.contains(&straight)
    }

    /// Stations from the straight start up to the entry of the next corner.
    fn region(analysis: &TrackAnalysis, straight: usize) -> Option<(usize, usize)> {
        let st = analysis.straights.get(straight)?;
        let len = st.span.len(analysis.n_stations);
        (len > 0).then_some((st.span.start, len))
    }

    /// Applies all stored raises to a target and re-imposes braking into
    /// the following corners.
    pub fn apply(&self, target: &TargetTrajectory, analysis: &TrackAnalysis) -> Result<TargetTrajectory> {
        if self.scaled.is_empty() {
            return Ok(target.clone());
        }
        let n = target.len();
        let mut v = target.speed.v.clone();
        let seg = &target.path.segment;
        let brake = self.config.brake_share * self.envelope.ax_brake;
        for sc in &self.scaled {
            for (k, &raised) in sc.speeds.iter().enumerate() {
                let i = (sc.start + k) % n;
                v[i] = v[i].max(raised);
            }
            // fall back to the unscaled corner speed with the full brake
            let Some(c) = analysis.corner_after(sc.straight) else {
                continue;
            };
            let entry = analysis.corners[c].span.start;
            let reach = sc.speeds.len() + (entry + n - (sc.start + sc.speeds.len()) % n) % n;
            let mut i = entry;
            for _ in 0..reach {
                let prev = (i + n - 1) % n;
                let cap = (v[i] * v[i] + 2.0 * brake * seg[prev]).sqrt();
                if v[prev] > cap {
                    v[prev] = cap;
                }
                i = prev;
            }
        }
        let speed = SpeedProfile::from_speeds(v, seg);
        TargetTrajectory::new(target.path.points.clone(), speed, Provenance::Scaled)
    }

    /// One scaling pass after a completed lap: raises every eligible,
    /// unlocked straight where the car beat the target speed or did not
    /// hold full throttle. Returns the straights scaled in this pass.
    pub fn scale(
        &mut self,
        target: &TargetTrajectory,
        log: &LapLog,
        analysis: &TrackAnalysis,
        track: &Track,
    ) -> Result<Vec<usize>> {
        let n = target.len();
        let env_speed = estimate_speed(target.line(), &self.envelope)?.v;
        let mut achieved = vec![0.0f64; n];
        let mut throttle_sum = vec![0.0f64; n];
        let mut count = vec![0usize; n];
        for s in &log.samples {
            achieved[s.station] = achieved[s.station].max(s.state.vx);
            throttle_sum[s.station] += s.action.throttle;
            count[s.station] += 1;
        }
        let mut changed = Vec::new();
        for k in 0..analysis.straights.len() {
            if self.is_locked(k) || self.scaled.iter().any(|s| s.straight == k) {
                continue;
            }
            let st = &analysis.straights[k];
            let st_len = st.span.len(n) as f64 * track.spacing();
            if st_len < self.config.min_length {
                continue;
            }
            let Some((start, len)) = Self::region(analysis, k) else {
                continue;
            };
            let stations: Vec<usize> = (0..len).map(|j| (start + j) % n).collect();
            let faster = stations.iter().any(|&i| count[i] > 0 && achieved[i] > target.speed.v[i] + 0.1);
            let part = stations
                .iter()
                .filter(|&&i| count[i] > 0 && throttle_sum[i] / (count[i] as f64) < self.config.full_throttle)
                .count();
            if !(faster || part * 10 > stations.len()) {
                continue;
            }
            let speeds = stations
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    let goal = achieved[i].max(env_speed[i]) + self.config.margin;
                    let along = j as f64 * track.spacing();
                    let w = 0.5 * (1.0 - (std::f64::consts::PI * (along / self.config.blend).min(1.0)).cos());
                    let old = target.speed.v[i];
                    old + w * (goal.max(old) - old)
                })
                .collect();
            self.scaled.push(ScaledStraight {
                straight: k,
                start,
                speeds,
            });
            changed.push(k);
        }
        Ok(changed)
    }

    /// A failure at `corner`: the straight leading into it loses its
    /// scaling for good. Returns that straight if it was scaled.
    pub fn on_failure(&mut self, corner: usize, analysis: &TrackAnalysis) -> Option<usize> {
        let k = analysis.straight_before(corner)?;
        let was = self.scaled.iter().position(|s| s.straight == k)?;
        self.scaled.remove(was);
        if !self.locked.contains(&k) {
            self.locked.push(k);
        }
        Some(k)
    }

    /// Station range `[start, start + len)` where a scaled target is still
    /// rising or holding, i.e. before the braking fallback begins.
    pub fn accelerating_region(&self, target: &TargetTrajectory, straight: usize) -> Option<(usize, usize)> {
        let sc = self.scaled.iter().find(|s| s.straight == straight)?;
        let n = target.len();
        let v = &target.speed.v;
        let mut len = 0;
        while len + 1 < sc.speeds.len() && v[(sc.start + len + 1) % n] >= v[(sc.start + len) % n] - 1e-9 {
            len += 1;
        }
        Some((sc.start, len + 1))
    }
}

/// Share of the samples in `[start, start + len)` with full throttle,
/// counted from where the car enters the region up to the first brake
/// application there, and only while it drives straight: lateral
/// acceleration `r·vx` at most `straight_ay`. Corner exits where the
/// driven axle is still sharing grip with cornering do not count.
pub fn full_throttle_coverage(
    log: &LapLog,
    (start, len): (usize, usize),
    n: usize,
    full: f64,
    straight_ay: f64,
) -> f64 {
    let entry = len.min(4);
    let inside = log
        .samples
        .iter()
        .skip_while(|s| (s.station + n - start) % n >= entry)
        .take_while(|s| (s.station + n - start) % n < len && s.action.brake <= 0.0);
    let (mut total, mut at_full) = (0usize, 0usize);
    for s in inside.filter(|s| (s.state.yaw_rate * s.state.vx).abs() <= straight_ay) {
        total += 1;
        at_full += usize::from(s.action.throttle >= full);
    }
    if total == 0 {
        0.0
    } else {
        at_full as f64 / total as f64
    }
}

// ---------------------------------------------------------------------------
// Loop

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Iteration budget spent.
    Budget,
    /// Completed with nothing left to adapt.
    Converged,
    Unresolvable { corner: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub summary: LapSummary,
    /// Corner the failure was attributed to.
    pub corner: Option<usize>,
    pub events: Vec<AdaptationEvent>,
    /// Target lap time predicted from the target speed profile.
    pub target_lap_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationState {
    pub iteration: usize,
    pub promp: ProMp,
    pub target: TargetTrajectory,
    #[serde(skip)]
    pub history: Vec<LapLog>,
    pub records: Vec<IterationRecord>,
    /// Observations applied in the current iteration.
    pub pending: Vec<Observation>,
    pub best_lap_time: Option<f64>,
    /// Failed iterations attributed to each corner.
    pub corner_iterations: Vec<usize>,
    pub scaler: SpeedScaler,
    pub outcome: Outcome,
    pub analysis: TrackAnalysis,
}

impl AdaptationState {
    /// Iteration of the first completed lap.
    pub fn first_completion(&self) -> Option<usize> {
        self.records.iter().find(|r| r.summary.completed).map(|r| r.iteration)
    }

    /// Failed iterations before the first completion that covered less
    /// distance than the failed iteration before them.
    pub fn distance_regressions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut last: Option<f64> = None;
        for r in &self.records {
            if r.summary.completed {
                break;
            }
            if last.is_some_and(|d| r.summary.distance < d) {
                out.push(r.iteration);
            }
            last = Some(r.summary.distance);
        }
        out
    }
}

/// Conditions `promp` on each observation in turn.
pub fn condition_sequence(promp: &ProMp, observations: &[Observation]) -> Result<ProMp> {
    let mut p = promp.clone();
    for obs in observations {
        p = p.condition(obs, None)?;
    }
    Ok(p)
}

/// Covariance used for conditioning: the masked prior plus a smooth
/// variance floor on the Δt weights, correlated over the mask bandwidth.
pub fn process_variance(promp: &ProMp, config: &AdaptationConfig) -> DMatrix<f64> {
    let mut sigma = promp.masked_covariance(config.bandwidth, config.mask_shape);
    let Some(it) = promp.variable_index("dt") else {
        return sigma;
    };
    let nb = promp.basis.n_bf;
    let block = promp.mu_w.rows(it * nb, nb);
    let level = config.speed_prior_share * block.mean().abs();
    if level <= 0.0 {
        return sigma;
    }
    let ell = (config.bandwidth as f64 / 2.0).max(1.0);
    for a in 0..nb {
        for b in 0..nb {
            let d = promp.basis.index_distance(a, b) as f64;
            sigma[(it * nb + a, it * nb + b)] += level * level * (-0.5 * d * d / (ell * ell)).exp();
        }
    }
    crate::promp::repair_psd(&sigma).0
}

/// Simulate, analyse, condition, repeat. The policy and plant are only read.
pub fn adaptation_loop(
    initial: &ProMp,
    track: &Track,
    envelope: &PerformanceEnvelope,
    policy: &dyn DrivingPolicy,
    sim: &SimConfig,
    config: &AdaptationConfig,
) -> Result<AdaptationState> {
    let masked: DMatrix<f64> = process_variance(initial, config);
    let mut promp = ProMp {
        sigma_w: masked.clone(),
        ..initial.clone()
    };
    let mean_target = TargetTrajectory::from_promp(&promp, Provenance::Sampled)?;
    let analysis = crate::geometry::analyse_track(
        mean_target.line(),
        track,
        &crate::geometry::AnalysisConfig::default(),
        Some(envelope),
    )?;
    let mut scaler = SpeedScaler::new(config.scaling.clone(), envelope.clone());
    let mut state = AdaptationState {
        iteration: 0,
        target: mean_target,
        promp: promp.clone(),
        history: Vec::new(),
        records: Vec::new(),
        pending: Vec::new(),
        best_lap_time: None,
        corner_iterations: vec![0; analysis.corners.len()],
        scaler: scaler.clone(),
        outcome: Outcome::Budget,
        analysis: analysis.clone(),
    };
    let mut floor_hits: Option<(usize, usize)> = None;

    for i in 0..=config.budget {
        state.iteration = i;
        let log = run_lap(policy, &state.target, track, sim)?;
        let summary = log.summary(track);
        let mut events = Vec::new();
        let mut observations = Vec::new();
        let mut corner = None;
        let mut scaled = Vec::new();

        if log.completed() {
            let t = log.lap_time.unwrap_or(f64::INFINITY);
            state.best_lap_time = Some(state.best_lap_time.map_or(t, |b| b.min(t)));
            floor_hits = None;
            for obs in check_in_envelope(&log, &promp, track, config) {
                events.push(event(EventKind::EnvelopeViolation, &obs, track, "completed lap left the corridor"));
                observations.push(obs);
            }
        } else if let Some(c) = log.exit_station.and_then(|e| failing_corner(&analysis, e)) {
            corner = Some(c);
            state.corner_iterations[c] += 1;
            if let Some(k) = scaler.on_failure(c, &analysis) {
                let st = analysis.straights[k].span.start;
                events.push(AdaptationEvent {
                    kind: EventKind::ScalingLocked,
                    station: st,
                    s: track.reference.s[st],
                    observation: None,
                    reason: format!("failure at corner {c} after scaling straight {k}"),
                });
            }
            let line = analyse_driving_line(&log, &analysis, &promp, track, config);
            let slip = slip_check(&log, &config.slip);
            for obs in &line {
                events.push(event(EventKind::LineCorrection, obs, track, "target line outside corridor before apex"));
            }
            observations.extend(line.iter().cloned());
            if line.is_empty() || slip.is_some() {
                let env_speed = estimate_speed(state.target.line(), envelope)?.v;
                match adapt_speed(&promp, &analysis, c, &env_speed, config) {
                    Ok(obs) => {
                        floor_hits = None;
                        let why = if slip.is_some() { "extreme tire slip" } else { "no line adaptation found" };
                        for o in &obs {
                            events.push(event(EventKind::SpeedReduction, o, track, why));
                        }
                        observations.extend(obs);
                    }
                    Err(Error::FloorReached { corner }) => {
                        let hits = match floor_hits {
                            Some((k, h)) if k == corner => h + 1,
                            _ => 1,
                        };
                        floor_hits = Some((corner, hits));
                        if hits >= config.floor_hits {
                            state.outcome = Outcome::Unresolvable { corner };
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        state.history.push(log);
        let last_log = state.history.last().expect("pushed above");
        if i < config.budget && state.outcome == Outcome::Budget {
            if !observations.is_empty() {
                promp = condition_sequence(&promp, &observations)?;
                if config.covariance_reset {
                    promp.sigma_w = masked.clone();
                } else {
                    promp.sigma_w = process_variance(&promp, config);
                }
            }
            let mut next = TargetTrajectory::from_promp(&promp, Provenance::Conditioned)?;
            if config.enable_scaling && last_log.completed() {
                let base = scaler.apply(&next, &analysis)?;
                scaled = scaler.scale(&base, last_log, &analysis, track)?;
                for &k in &scaled {
                    let st = analysis.straights[k].span.start;
                    events.push(AdaptationEvent {
                        kind: EventKind::SpeedScaling,
                        station: st,
                        s: track.reference.s[st],
                        observation: None,
                        reason: format!("raised target speed on straight {k}"),
                    });
                }
            }
            next = scaler.apply(&next, &analysis)?;
            state.target = next;
        }
        state.pending = observations.clone();
        debug!("iteration {i}: {:?}, {} observations", summary.status, observations.len());
        state.records.push(IterationRecord {
            iteration: i,
            summary,
            corner,
            events,
            target_lap_time: state.target.speed.lap_time,
        });
        if state.outcome != Outcome::Budget {
            break;
        }
        let done = state.history.last().is_some_and(|l| l.completed()) && observations.is_empty() && scaled.is_empty();
        if done {
            state.outcome = Outcome::Converged;
            break;
        }
    }
    state.promp = promp;
    state.scaler = scaler;
    info!(
        "adaptation finished after {} iterations: {:?}, best lap {:?}",
        state.iteration, state.outcome, state.best_lap_time
    );
    Ok(state)
}

fn event(kind: EventKind, obs: &Observation, track: &Track, reason: &str) -> AdaptationEvent {
    AdaptationEvent {
        kind,
        station: track.station_at(obs.s_prime),
        s: obs.s_prime,
        observation: Some(obs.clone()),
        reason: reason.to_string(),
    }
}

/// Status of a lap as a compact label for reports.
pub fn status_label(status: LapStatus) -> &'static str {
    match status {
        LapStatus::Completed => "completed",
        LapStatus::OffTrack => "off_track",
        LapStatus::Timeout => "timeout",
        LapStatus::Blowup => "blowup",
        LapStatus::LocalizationLost => "localization_lost",
    }
}
