//! Scenario builders shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use racedriver_core::envelope::PerformanceEnvelope;
use racedriver_core::geometry::{Point, Track};
use racedriver_core::lap::SimConfig;
use racedriver_core::promp::{BasisConfig, ProMp};
use racedriver_core::synthesis::*;
use racedriver_core::synthetic::{self, DemoNoise};

pub fn envelope() -> PerformanceEnvelope {
    SimConfig::default().vehicle.envelope()
}

/// `(x, y, Δt)` prior fitted to `lines` driven at the envelope's speed.
pub fn prior(lines: &[Vec<Point>], track: &Track, env: &PerformanceEnvelope) -> ProMp {
    target_promp(lines, track, env, 15.0).unwrap()
}

/// Prior around noisy copies of the elastic-band line.
pub fn noisy_prior(track: &Track, laps: usize, env: &PerformanceEnvelope, seed: u64) -> ProMp {
    let noise = DemoNoise { straight_std: 0.15, corner_std: 0.3, ..DemoNoise::default() };
    let lines = synthetic::noisy_demonstrations(track, laps, &noise, seed).unwrap();
    prior(&lines, track, env)
}

/// Prior over `lines` where each line is first moved by `dy(station)`.
pub fn shifted_prior(
    track: &Track,
    lines: &[Vec<Point>],
    dy: impl Fn(usize) -> f64,
    env: &PerformanceEnvelope,
) -> ProMp {
    let moved: Vec<Vec<Point>> = lines
        .iter()
        .map(|l| {
            l.iter()
                .enumerate()
                .map(|(i, p)| {
                    let nrm = track.normal(i);
                    let d = dy(i);
                    [p[0] + nrm[0] * d, p[1] + nrm[1] * d]
                })
                .collect()
        })
        .collect();
    prior(&moved, track, env)
}

pub fn library(tracks: &[Track], laps: usize) -> DemonstrationLibrary {
    let demos: Vec<TrackDemos> = tracks
        .iter()
        .enumerate()
        .map(|(k, t)| TrackDemos {
            track: t.clone(),
            laps: synthetic::noisy_demonstrations(t, laps, &DemoNoise::default(), 10 + k as u64).unwrap(),
        })
        .collect();
    build_library(&demos, &LibraryConfig::default()).unwrap()
}

/// Sampled lines on the six-corner track from a three-track library,
/// timed against an envelope `factor` times the real one: the target asks
/// for more than the car can give in most corners.
pub fn overlimit_scenario(factor: f64) -> (Track, ProMp) {
    let lib = library(
        &[
            synthetic::oval(300.0, 50.0, 12.0).unwrap(),
            synthetic::five_corner(12.0).unwrap(),
            synthetic::hairpin(12.0).unwrap(),
        ],
        8,
    );
    let track = synthetic::six_corner(12.0).unwrap();
    let gen = generalize(&track, &lib, &GeneralizeConfig::default()).unwrap();
    let lines: Vec<Vec<Point>> = sample_lines(&gen, &track, 25, 3).unwrap().into_iter().map(|l| l.points).collect();
    let promp = target_promp(&lines, &track, &envelope().scaled_limits(factor), 15.0).unwrap();
    (track, promp)
}

pub fn basis_for(track: &Track) -> BasisConfig {
    BasisConfig::for_track(track.length(), track.n_stations(), 15.0).unwrap()
}

/// Quasi-steady-state lap time along an oval with exact curvature, by
/// RK4 integration of `d(v²)/ds` on a grid ten times finer than the track.
pub fn oval_oracle(straight: f64, radius: f64, spacing: f64, env: &PerformanceEnvelope) -> f64 {
    let arc = std::f64::consts::PI * radius;
    let length = 2.0 * straight + 2.0 * arc;
    let n = (length / (spacing / 10.0)).round() as usize;
    let h = length / n as f64;
    // lap starts mid-straight, like the synthetic oval
    let kappa = |s: f64| {
        let s = s.rem_euclid(length);
        let half = straight / 2.0;
        let in_arc = (s >= half && s < half + arc) || (s >= half + arc + straight && s < half + 2.0 * arc + straight);
        if in_arc {
            1.0 / radius
        } else {
            0.0
        }
    };
    let accel = |v: f64| {
        let t = &env.ax_acc;
        if v <= t[0].0 {
            return t[0].1;
        }
        for w in t.windows(2) {
            if v <= w[1].0 {
                return w[0].1 + (w[1].1 - w[0].1) * (v - w[0].0) / (w[1].0 - w[0].0);
            }
        }
        t[t.len() - 1].1
    };
    let residual = |v2: f64, k: f64| {
        let lat = v2 * k / (env.scale * env.ay_max);
        (1.0 - lat * lat).max(0.0).sqrt()
    };
    let limit = |s: f64| {
        let k = kappa(s);
        if k > 0.0 {
            (env.scale * env.ay_max / k).min(env.v_max * env.v_max)
        } else {
            env.v_max * env.v_max
        }
    };
    // u = v², du/ds = 2 a
    let f_acc = |s: f64, u: f64| 2.0 * env.scale * accel(u.max(0.0).sqrt()) * residual(u, kappa(s));
    let f_brk = |s: f64, u: f64| 2.0 * env.scale * env.ax_brake * residual(u, kappa(s));
    let rk4 = |f: &dyn Fn(f64, f64) -> f64, s: f64, u: f64, h: f64| {
        let k1 = f(s, u);
        let k2 = f(s + h / 2.0, u + h / 2.0 * k1);
        let k3 = f(s + h / 2.0, u + h / 2.0 * k2);
        let k4 = f(s + h, u + h * k3);
        u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut u: Vec<f64> = (0..n).map(|i| limit(i as f64 * h)).collect();
    // start both passes at an apex where the limit binds
    let start = (0..n).min_by(|&a, &b| u[a].total_cmp(&u[b])).unwrap();
    for _ in 0..3 {
        for k in 1..=n {
            let i = (start + k) % n;
            let prev = (start + k - 1) % n;
            let reach = rk4(&f_acc, prev as f64 * h, u[prev], h);
            u[i] = u[i].min(reach);
        }
        for k in 1..=n {
            let i = (start + n - k) % n;
            let next = (i + 1) % n;
            let reach = rk4(&|s, u| f_brk(-s, u), -(next as f64 * h), u[next], h);
            u[i] = u[i].min(reach);
        }
    }
    (0..n)
        .map(|i| {
            let a = u[i].sqrt();
            let b = u[(i + 1) % n].sqrt();
            2.0 * h / (a + b)
        })
        .sum()
}


pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Conditions the joint Gaussian over `(w, y)` by partitioning its
/// precision matrix, with no reference to the gain formula.
pub fn joint_precision_oracle(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mu.len();
    let m = y.len();
    let mut joint = DMatrix::zeros(n + m, n + m);
    joint.view_mut((0, 0), (n, n)).copy_from(sigma);
    let cross = sigma * psi;
    joint.view_mut((0, n), (n, m)).copy_from(&cross);
    joint.view_mut((n, 0), (m, n)).copy_from(&cross.transpose());
    joint
        .view_mut((n, n), (m, m))
        .copy_from(&(psi.transpose() * sigma * psi + noise));
    let precision = joint.try_inverse().unwrap();
    let lww = precision.view((0, 0), (n, n)).into_owned();
    let lwy = precision.view((0, n), (n, m)).into_owned();
    let cov = lww.clone().try_inverse().unwrap();
    let y_mean = psi.transpose() * mu;
    let mean = mu - &cov * lwy * (y - y_mean);
    (mean, cov)
}

