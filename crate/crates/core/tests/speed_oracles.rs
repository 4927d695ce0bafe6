mod common;

use proptest::prelude::*;

use racedriver_core::envelope::{estimate_speed, PerformanceEnvelope};
use racedriver_core::geometry::Path;
use racedriver_core::synthetic;

fn circle(r: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

fn lateral_only(ay: f64) -> PerformanceEnvelope {
    PerformanceEnvelope {
        ay_max: ay,
        ax_acc: vec![(0.0, 5.0), (100.0, 5.0)],
        ax_brake: 10.0,
        v_max: 100.0,
        scale: 1.0,
    }
}

#[test]
fn circle_speed_is_the_lateral_limit() {
    let p = estimate_speed(&circle(50.0, 400), &lateral_only(10.0)).unwrap();
    let expect = (10.0f64 * 50.0).sqrt();
    for v in &p.v {
        assert!((v - expect).abs() / expect < 0.005, "{v}");
    }
}

#[test]
fn oval_lap_time_matches_fine_integration() {
    let track = synthetic::oval(300.0, 50.0, 12.0).unwrap();
    let env = PerformanceEnvelope::default();
    let estimate = estimate_speed(&track.reference.points, &env).unwrap().lap_time;
    let oracle = common::oval_oracle(300.0, 50.0, track.spacing(), &env);
    let rel = (estimate - oracle).abs() / oracle;
    assert!(rel < 0.01, "estimate {estimate} oracle {oracle}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn profile_respects_limits_and_ellipse(straight in 50.0f64..500.0, radius in 20.0f64..120.0, scale in 0.3f64..1.0) {
        let track = synthetic::oval(straight, radius, 12.0).unwrap();
        let env = PerformanceEnvelope::default().with_scale(scale);
        let path = Path::new(track.reference.points.clone()).unwrap();
        let prof = estimate_speed(&path.points, &env).unwrap();
        let n = path.len();
        for i in 0..n {
            let v = prof.v[i];
            prop_assert!(v <= env.corner_speed(path.curvature[i]) * (1.0 + 1e-9));
            let next = (i + 1) % n;
            let dv2 = prof.v[next].powi(2) - v * v;
            let ell = |v: f64, k: f64| {
                let lat = v * v * k.abs() / (scale * env.ay_max);
                (1.0 - lat * lat).max(0.0).sqrt()
            };
            if dv2 > 0.0 {
                let a = dv2 / (2.0 * path.segment[i]);
                let cap = scale * env.acceleration(v) * ell(v, path.curvature[i]);
                prop_assert!(a <= cap * (1.0 + 1e-6) + 1e-9, "station {i}: {a} > {cap}");
            } else {
                let a = -dv2 / (2.0 * path.segment[i]);
                let cap = scale * env.ax_brake * ell(prof.v[next], path.curvature[next]);
                prop_assert!(a <= cap * (1.0 + 1e-6) + 1e-9, "station {i}: {a} > {cap}");
            }
        }
    }

    #[test]
    fn lap_time_falls_with_scale(a in 0.3f64..1.0, b in 0.3f64..1.0) {
        let track = synthetic::six_corner(12.0).unwrap();
        let env = PerformanceEnvelope::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let slow = estimate_speed(&track.reference.points, &env.with_scale(lo)).unwrap().lap_time;
        let fast = estimate_speed(&track.reference.points, &env.with_scale(hi)).unwrap().lap_time;
        prop_assert!(fast <= slow + 1e-9);
    }

    #[test]
    fn longer_straights_never_take_less_time(straight in 50.0f64..400.0, extra in 5.0f64..200.0) {
        let env = PerformanceEnvelope::default();
        let short = synthetic::oval(straight, 50.0, 12.0).unwrap();
        let long = synthetic::oval(straight + extra, 50.0, 12.0).unwrap();
        let t0 = estimate_speed(&short.reference.points, &env).unwrap().lap_time;
        let t1 = estimate_speed(&long.reference.points, &env).unwrap().lap_time;
        prop_assert!(t1 >= t0);
    }
}
