mod common;

use racedriver_core::adaptation::*;
use racedriver_core::envelope::{estimate_speed, PerformanceEnvelope};
use racedriver_core::geometry::{analyse_track, AnalysisConfig, Point, Track, TrackAnalysis};
use racedriver_core::lap::{run_lap, LapLog, LapSample, LapStatus, SimConfig};
use racedriver_core::policy::{PreviewController, Provenance, TargetTrajectory};
use racedriver_core::promp::ProMp;
use racedriver_core::synthesis::{build_mean_line, MeanLineConfig};
use racedriver_core::synthetic::{self, DemoNoise};
use racedriver_core::vehicle::{step, Action, VehicleParams, VehicleState};
use racedriver_core::Error;

fn oval() -> Track {
    synthetic::oval(300.0, 50.0, 12.0).unwrap()
}

fn mean_line(p: &ProMp) -> Vec<Point> {
    TargetTrajectory::from_promp(p, Provenance::Sampled).unwrap().line().to_vec()
}

fn analysis_of(p: &ProMp, track: &Track, env: &PerformanceEnvelope) -> TrackAnalysis {
    analyse_track(&mean_line(p), track, &AnalysisConfig::default(), Some(env)).unwrap()
}

fn failed_at(station: usize) -> LapLog {
    LapLog {
        samples: Vec::new(),
        status: LapStatus::OffTrack,
        lap_time: None,
        distance: 100.0,
        exit_station: Some(station),
        co_activation: 0,
    }
}

fn sample(t: f64, station: usize, lateral: f64, state: VehicleState) -> LapSample {
    LapSample {
        t,
        state,
        action: Action::default(),
        s: 0.0,
        station,
        lateral,
        balance: 0.0,
        off_track: false,
    }
}

fn demo_lines(track: &Track, laps: usize) -> Vec<Vec<Point>> {
    let noise = DemoNoise { straight_std: 0.15, corner_std: 0.3, ..DemoNoise::default() };
    synthetic::noisy_demonstrations(track, laps, &noise, 7).unwrap()
}

/// Prior whose mean line is pushed past the outer border around
/// `apex + offset` stations of the first corner.
fn bulging_prior(offset: isize) -> (Track, ProMp, TrackAnalysis, usize) {
    let track = oval();
    let env = common::envelope();
    let base = common::noisy_prior(&track, 10, &env, 7);
    let analysis = analysis_of(&base, &track, &env);
    let corner = &analysis.corners[0];
    let n = track.n_stations() as isize;
    let centre = (corner.apex as isize + offset).rem_euclid(n) as usize;
    let outer = -corner.signed_peak_curvature.signum();
    let band = build_mean_line(&track, &MeanLineConfig::default()).unwrap().offsets;
    let spacing = track.spacing();
    let prior = common::shifted_prior(
        &track,
        &demo_lines(&track, 10),
        |i| {
            let mut k = (i as isize - centre as isize).rem_euclid(n);
            if k > n / 2 {
                k -= n;
            }
            let w = (-0.5 * (k as f64 * spacing / 12.0).powi(2)).exp();
            w * (outer * 8.0 - band[i])
        },
        &env,
    );
    (track, prior, analysis, centre)
}

#[test]
fn pre_apex_violation_yields_one_observation_inside() {
    let (track, prior, analysis, centre) = bulging_prior(-12);
    let config = AdaptationConfig::default();
    let apex = analysis.corners[0].apex;
    let obs = analyse_driving_line(&failed_at(apex), &analysis, &prior, &track, &config);
    assert_eq!(obs.len(), 1);
    let st = track.station_at(obs[0].s_prime);
    assert!((st as isize - centre as isize).abs() <= 4, "station {st}, bulge at {centre}");
    let q = [obs[0].y_star[0], obs[0].y_star[1]];
    let p = track.reference.points[st];
    let nrm = track.normal(st);
    let d = (q[0] - p[0]) * nrm[0] + (q[1] - p[1]) * nrm[1];
    let (lo, hi) = track.corridor(st, config.corridor_margin);
    assert!(d >= lo && d <= hi, "{d} outside [{lo}, {hi}]");
}

#[test]
fn line_inside_the_corridor_yields_nothing() {
    let track = oval();
    let env = common::envelope();
    let prior = common::noisy_prior(&track, 10, &env, 7);
    let analysis = analysis_of(&prior, &track, &env);
    let apex = analysis.corners[1].apex;
    let obs = analyse_driving_line(&failed_at(apex), &analysis, &prior, &track, &AdaptationConfig::default());
    assert!(obs.is_empty());
}

#[test]
fn violation_after_the_apex_is_ignored() {
    let (track, prior, analysis, _) = bulging_prior(14);
    let apex = analysis.corners[0].apex;
    let obs = analyse_driving_line(&failed_at(apex), &analysis, &prior, &track, &AdaptationConfig::default());
    assert!(obs.is_empty());
}

fn apex_speed(p: &ProMp, analysis: &TrackAnalysis, corner: usize) -> f64 {
    let t = TargetTrajectory::from_promp(p, Provenance::Conditioned).unwrap();
    t.speed.v[analysis.corners[corner].apex]
}

fn apply(p: &ProMp, obs: &[racedriver_core::promp::Observation], config: &AdaptationConfig) -> ProMp {
    let prepared = ProMp { sigma_w: process_variance(p, config), ..p.clone() };
    condition_sequence(&prepared, obs).unwrap()
}

#[test]
fn speed_reductions_lower_the_apex_until_the_floor() {
    let track = oval();
    let env = common::envelope();
    let mut p = common::noisy_prior(&track, 10, &env, 7);
    let analysis = analysis_of(&p, &track, &env);
    let env_speed = estimate_speed(&mean_line(&p), &env).unwrap().v;
    let config = AdaptationConfig::default();
    let c = 0;
    let corner = &analysis.corners[c];
    let mut last = apex_speed(&p, &analysis, c);
    let mut rounds = 0;
    loop {
        match adapt_speed(&p, &analysis, c, &env_speed, &config) {
            Ok(obs) => {
                assert_eq!(obs.len(), 3);
                let n = track.n_stations();
                let at: Vec<usize> = obs.iter().map(|o| track.station_at(o.s_prime)).collect();
                assert_eq!(at, vec![corner.span.start, corner.apex, (corner.span.end + n - 1) % n]);
                p = apply(&p, &obs, &config);
                let v = apex_speed(&p, &analysis, c);
                assert!(v < last, "round {rounds}: {v} !< {last}");
                last = v;
            }
            Err(Error::FloorReached { corner }) => {
                assert_eq!(corner, c);
                break;
            }
            Err(e) => panic!("{e}"),
        }
        rounds += 1;
        assert!(rounds < 60);
    }
    assert!(last < 0.5 * env_speed[corner.apex], "stopped at {last}");
    assert!(rounds > 5);
}

#[test]
fn repeated_reductions_make_an_overspeed_corner_drivable() {
    let track = oval();
    let env = common::envelope();
    let lines = demo_lines(&track, 10);
    let mut p = common::prior(&lines, &track, &env.scaled_limits(1.6));
    let analysis = analysis_of(&p, &track, &env);
    let env_speed = estimate_speed(&mean_line(&p), &env).unwrap().v;
    let sim = SimConfig::default();
    let config = AdaptationConfig::default();
    let policy = PreviewController::default();
    for round in 0..30 {
        let target = TargetTrajectory::from_promp(&p, Provenance::Conditioned).unwrap();
        let log = run_lap(&policy, &target, &track, &sim).unwrap();
        if log.completed() {
            assert!(round > 0, "target was feasible from the start");
            return;
        }
        let c = failing_corner(&analysis, log.exit_station.unwrap()).unwrap();
        let obs = adapt_speed(&p, &analysis, c, &env_speed, &config).unwrap();
        p = apply(&p, &obs, &config);
    }
    panic!("corner never became drivable");
}

#[test]
fn clean_lap_has_no_slip_episode() {
    let track = oval();
    let sim = SimConfig::default();
    let line = build_mean_line(&track, &MeanLineConfig::default()).unwrap().points;
    let target = TargetTrajectory::from_envelope(line, &sim.vehicle.envelope().with_scale(0.6)).unwrap();
    let log = run_lap(&PreviewController::default(), &target, &track, &sim).unwrap();
    assert!(log.completed());
    assert_eq!(slip_check(&log, &SlipConfig::default()), None);
}

#[test]
fn power_oversteer_triggers_the_slip_check() {
    let p = VehicleParams::default();
    let mut state = VehicleState::at(0.0, 0.0, 0.0, 12.0);
    let mut samples = Vec::new();
    let push = Action { steer: 0.08, throttle: 1.0, brake: 0.0 };
    for k in 0..120 {
        state = match step(&p, &state, &push, 0.01) {
            Ok(s) => s,
            Err(_) => break,
        };
        let mut s = sample(k as f64 * 0.01, 40 + k / 10, 0.0, state);
        s.balance = racedriver_core::vehicle::balance_metric(&state);
        samples.push(s);
    }
    let log = LapLog { samples, status: LapStatus::OffTrack, lap_time: None, distance: 30.0, exit_station: Some(50), co_activation: 0 };
    let trigger = slip_check(&log, &SlipConfig::default()).expect("oversteer not flagged");
    assert!((40..52).contains(&trigger.station));
}

#[test]
fn standing_car_never_triggers() {
    let state = VehicleState { vx: 0.0, slip_front: 1.0, slip_rear: -1.0, ..VehicleState::at(0.0, 0.0, 0.0, 0.0) };
    let samples = (0..500).map(|k| sample(k as f64 * 0.01, 0, 0.0, state)).collect();
    let log = LapLog { samples, status: LapStatus::Timeout, lap_time: None, distance: 0.0, exit_station: Some(0), co_activation: 0 };
    assert_eq!(slip_check(&log, &SlipConfig::default()), None);
}

fn lap_with_laterals(laterals: &[(usize, f64)]) -> LapLog {
    let state = VehicleState::at(0.0, 0.0, 0.0, 20.0);
    LapLog {
        samples: laterals.iter().enumerate().map(|(k, &(st, lat))| sample(k as f64 * 0.1, st, lat, state)).collect(),
        status: LapStatus::Completed,
        lap_time: Some(60.0),
        distance: 900.0,
        exit_station: None,
        co_activation: 0,
    }
}

#[test]
fn excursions_become_ordered_mild_corrections() {
    let track = oval();
    let env = common::envelope();
    let prior = common::noisy_prior(&track, 10, &env, 7);
    let config = AdaptationConfig::default();
    let n = track.n_stations();
    let edge = |i: usize| track.corridor(i, config.corridor_margin).1;

    let inside: Vec<(usize, f64)> = (0..n).map(|i| (i, 0.0)).collect();
    assert!(check_in_envelope(&lap_with_laterals(&inside), &prior, &track, &config).is_empty());

    let bump = |i: usize, at: usize| {
        let k = (i as f64 - at as f64).abs();
        (0.3 - 0.05 * k).max(0.0)
    };
    let one: Vec<(usize, f64)> = (0..n).map(|i| (i, edge(i) + bump(i, 105) - 0.05)).collect();
    let obs = check_in_envelope(&lap_with_laterals(&one), &prior, &track, &config);
    assert_eq!(obs.len(), 1);
    assert_eq!(track.station_at(obs[0].s_prime), 105);
    assert!((obs[0].sigma_y_star[(0, 0)] - config.mild_std.powi(2)).abs() < 1e-12);

    let two: Vec<(usize, f64)> = (0..n).map(|i| (i, edge(i) + bump(i, 300) + bump(i, 40) - 0.05)).collect();
    let obs = check_in_envelope(&lap_with_laterals(&two), &prior, &track, &config);
    let at: Vec<usize> = obs.iter().map(|o| track.station_at(o.s_prime)).collect();
    assert_eq!(at, vec![40, 300]);
}

#[test]
fn circle_has_nothing_to_scale() {
    let n = 300;
    let pts: Vec<Point> = (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            [60.0 * a.cos(), 60.0 * a.sin()]
        })
        .collect();
    let track = Track::new("circle", pts.clone(), vec![6.0; n], vec![6.0; n]).unwrap();
    let env = common::envelope();
    let target = TargetTrajectory::from_envelope(pts.clone(), &env.with_scale(0.7)).unwrap();
    let analysis = analyse_track(&pts, &track, &AnalysisConfig::default(), Some(&env)).unwrap();
    let log = run_lap(&PreviewController::default(), &target, &track, &SimConfig::default()).unwrap();
    assert!(log.completed());
    let mut scaler = SpeedScaler::new(ScalingConfig::default(), env);
    assert!(scaler.scale(&target, &log, &analysis, &track).unwrap().is_empty());
    assert_eq!(scaler.apply(&target, &analysis).unwrap(), target);
}

/// Conservative target on the long-straight oval: 95% envelope with half
/// the acceleration.
fn conservative_target(track: &Track) -> TargetTrajectory {
    let env = common::envelope();
    let slow = PerformanceEnvelope {
        ax_acc: env.ax_acc.iter().map(|&(v, a)| (v, 0.5 * a)).collect(),
        ..env.with_scale(0.95)
    };
    let line = build_mean_line(track, &MeanLineConfig::default()).unwrap().points;
    TargetTrajectory::from_envelope(line, &slow).unwrap()
}

#[test]
fn failure_after_scaling_locks_and_restores_the_straight() {
    let track = synthetic::long_straight(12.0).unwrap();
    let env = common::envelope();
    let sim = SimConfig::default();
    let policy = PreviewController::default();
    let target = conservative_target(&track);
    let analysis = analyse_track(target.line(), &track, &AnalysisConfig::default(), Some(&env)).unwrap();
    let first = run_lap(&policy, &target, &track, &sim).unwrap();
    assert!(first.completed());

    // an optimistic envelope raises the straights beyond what the car can
    // brake from
    let mut scaler = SpeedScaler::new(ScalingConfig::default(), env.scaled_limits(1.6));
    let scaled = scaler.scale(&target, &first, &analysis, &track).unwrap();
    assert!(!scaled.is_empty());
    let raised = scaler.apply(&target, &analysis).unwrap();
    let second = run_lap(&policy, &raised, &track, &sim).unwrap();
    assert!(!second.completed());
    let corner = failing_corner(&analysis, second.exit_station.unwrap()).unwrap();
    let k = scaler.on_failure(corner, &analysis).expect("failure not traced to a scaled straight");
    assert!(scaler.is_locked(k));

    let restored = scaler.apply(&target, &analysis).unwrap();
    let n = track.n_stations();
    for i in analysis.straights[k].span.stations(n) {
        assert_eq!(restored.speed.v[i], target.speed.v[i]);
    }
    // the locked straight is never raised again
    let again = scaler.scale(&target, &first, &analysis, &track).unwrap();
    assert!(!again.contains(&k));
    assert!(scaler.scaled.iter().all(|s| s.straight != k));
}

#[test]
fn zero_budget_runs_one_iteration() {
    let track = oval();
    let env = common::envelope();
    let prior = common::noisy_prior(&track, 10, &env, 7);
    let config = AdaptationConfig { budget: 0, ..AdaptationConfig::default() };
    let state = adaptation_loop(&prior, &track, &env, &PreviewController::default(), &SimConfig::default(), &config).unwrap();
    assert_eq!(state.records.len(), 1);
    assert_eq!(state.history.len(), 1);
    assert_eq!(state.records[0].iteration, 0);
}

#[test]
fn hopeless_corner_is_reported_unresolvable() {
    let track = oval();
    let env = common::envelope();
    let prior = common::prior(&demo_lines(&track, 10), &track, &env.scaled_limits(1.6));
    // any reduction would already dip below this floor
    let config = AdaptationConfig { floor: 1.5, ..AdaptationConfig::default() };
    let state = adaptation_loop(&prior, &track, &env, &PreviewController::default(), &SimConfig::default(), &config).unwrap();
    let Outcome::Unresolvable { corner } = state.outcome else {
        panic!("outcome {:?}", state.outcome);
    };
    assert_eq!(state.records.len(), config.floor_hits);
    assert!(state.records.iter().all(|r| r.corner == Some(corner)));
}

#[test]
fn loop_only_reads_policy_and_plant() {
    let track = oval();
    let env = common::envelope();
    let prior = common::prior(&demo_lines(&track, 10), &track, &env.scaled_limits(1.3));
    let policy = PreviewController::default();
    let sim = SimConfig::default();
    let (policy_before, sim_before) = (policy.clone(), sim.clone());
    let config = AdaptationConfig { budget: 8, ..AdaptationConfig::default() };
    let state = adaptation_loop(&prior, &track, &env, &policy, &sim, &config).unwrap();
    assert_eq!(policy, policy_before);
    assert_eq!(sim, sim_before);
    assert!(state.first_completion().is_some());
    // observations of one iteration never leak into the next record
    for w in state.records.windows(2) {
        assert!(w[1].iteration == w[0].iteration + 1);
    }
}
