//! Synthetic circuits built from straights and constant-radius arcs, and
//! noisy demonstration laps around them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, sub, Point, Track};
use crate::promp::BasisConfig;
use crate::synthesis::{build_mean_line, MeanLineConfig};

/// Default station spacing of synthetic tracks (m).
pub const STATION_SPACING: f64 = 2.5;

/// One constructed arc, in arc length of the resampled track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcInfo {
    pub entry_s: f64,
    pub mid_s: f64,
    pub exit_s: f64,
    pub radius: f64,
    /// Signed turning angle (rad), positive to the left.
    pub turn: f64,
}

/// Polygon with tangent arcs of the given radii inscribed at each vertex.
/// The lap starts in the middle of the straight leading into vertex 0.
pub fn rounded_polygon(
    name: &str,
    vertices: &[Point],
    radii: &[f64],
    width: f64,
) -> Result<(Track, Vec<ArcInfo>)> {
    let n = vertices.len();
    if n < 3 || radii.len() != n {
        return Err(Error::InvalidTrack("need ≥3 vertices with one radius each".into()));
    }
    let dir = |a: Point, b: Point| {
        let d = sub(b, a);
        let l = norm(d);
        [d[0] / l, d[1] / l]
    };
    // signed turn and tangent length at every vertex
    let corners: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let d0 = dir(vertices[(k + n - 1) % n], vertices[k]);
            let d1 = dir(vertices[k], vertices[(k + 1) % n]);
            let turn = crate::geometry::cross(d0, d1).atan2(crate::geometry::dot(d0, d1));
            (turn, radii[k] * (turn.abs() / 2.0).tan())
        })
        .collect();
    for k in 0..n {
        let edge = norm(sub(vertices[(k + 1) % n], vertices[k]));
        if corners[k].1 + corners[(k + 1) % n].1 > edge + 1e-9 {
            return Err(Error::InvalidTrack(format!("edge {k} too short for its arcs")));
        }
    }

    let step = 0.5;
    let mut pts: Vec<Point> = Vec::new();
    let mut arcs = Vec::new();
    let mut s = 0.0;
    let push_straight = |pts: &mut Vec<Point>, s: &mut f64, a: Point, b: Point| {
        let len = norm(sub(b, a));
        let count = (len / step).ceil() as usize;
        for i in 0..count {
            let u = i as f64 / count as f64;
            pts.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
        }
        *s += len;
    };
    // half straight into vertex 0 starts the lap; the other half closes it
    let last = n - 1;
    let straight_start = |k: usize| {
        let d = dir(vertices[k], vertices[(k + 1) % n]);
        let t = corners[k].1;
        [vertices[k][0] + d[0] * t, vertices[k][1] + d[1] * t]
    };
    let straight_end = |k: usize| {
        let d = dir(vertices[(k + n - 1) % n], vertices[k]);
        let t = corners[k].1;
        [vertices[k][0] - d[0] * t, vertices[k][1] - d[1] * t]
    };
    let a = straight_start(last);
    let b = straight_end(0);
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    push_straight(&mut pts, &mut s, mid, b);
    for k in 0..n {
        let (turn, _) = corners[k];
        let r = radii[k];
        let p0 = straight_end(k);
        let d0 = dir(vertices[(k + n - 1) % n], vertices[k]);
        let side = turn.signum();
        let center = [p0[0] - side * d0[1] * r, p0[1] + side * d0[0] * r];
        let start_angle = (p0[1] - center[1]).atan2(p0[0] - center[0]);
        let arc_len = r * turn.abs();
        let count = (arc_len / step).ceil().max(1.0) as usize;
        let entry_s = s;
        for i in 0..count {
            let ang = start_angle + turn * i as f64 / count as f64;
            pts.push([center[0] + r * ang.cos(), center[1] + r * ang.sin()]);
        }
        s += arc_len;
        arcs.push(ArcInfo {
            entry_s,
            mid_s: entry_s + arc_len / 2.0,
            exit_s: s,
            radius: r,
            turn,
        });
        let from = straight_start(k);
        let to = if k == last { mid } else { straight_end(k + 1) };
        if norm(sub(to, from)) > 1e-9 {
            push_straight(&mut pts, &mut s, from, to);
        }
    }
    let half = vec![width / 2.0; pts.len()];
    let raw = Track::new(name, pts, half.clone(), half)?;
    let track = raw.resample(STATION_SPACING)?;
    let ratio = track.length() / s;
    for arc in &mut arcs {
        arc.entry_s *= ratio;
        arc.mid_s *= ratio;
        arc.exit_s *= ratio;
    }
    Ok((track, arcs))
}

/// Oval: two straights of length `straight` joined by half circles of
/// radius `radius`, starting at `(0, -radius)` heading along +x.
pub fn oval(straight: f64, radius: f64, width: f64) -> Result<Track> {
    let hx = straight / 2.0 + radius;
    let v = [[hx, -radius], [hx, radius], [-hx, radius], [-hx, -radius]];
    Ok(rounded_polygon("oval", &v, &[radius; 4], width)?.0)
}

pub fn six_corner_with_arcs(width: f64) -> Result<(Track, Vec<ArcInfo>)> {
    rounded_polygon(
        "six_corner",
        &[[0.0, 0.0], [420.0, 0.0], [540.0, 170.0], [400.0, 310.0], [270.0, 210.0], [60.0, 300.0]],
        &[40.0, 35.0, 40.0, 55.0, 35.0, 45.0],
        width,
    )
}

/// Six corners including one right-hander.
pub fn six_corner(width: f64) -> Result<Track> {
    Ok(six_corner_with_arcs(width)?.0)
}

/// Three widely separated corners.
pub fn three_corner(width: f64) -> Result<Track> {
    Ok(rounded_polygon(
        "three_corner",
        &[[0.0, 0.0], [700.0, 0.0], [350.0, 520.0]],
        &[50.0; 3],
        width,
    )?
    .0)
}

/// Five left-handers of mixed radius.
pub fn five_corner(width: f64) -> Result<Track> {
    Ok(rounded_polygon(
        "five_corner",
        &[[0.0, 0.0], [500.0, 0.0], [600.0, 250.0], [300.0, 420.0], [-50.0, 250.0]],
        &[40.0, 60.0, 30.0, 50.0, 45.0],
        width,
    )?
    .0)
}

/// Six corners with a tight hairpin and a right-hander.
pub fn hairpin(width: f64) -> Result<Track> {
    Ok(rounded_polygon(
        "hairpin",
        &[[0.0, 0.0], [350.0, -40.0], [500.0, 150.0], [250.0, 120.0], [150.0, 330.0], [-80.0, 200.0]],
        &[35.0, 45.0, 30.0, 40.0, 35.0, 50.0],
        width,
    )?
    .0)
}

/// Oval with long straights, for speed-scaling experiments.
pub fn long_straight(width: f64) -> Result<Track> {
    let mut t = oval(600.0, 50.0, width)?;
    t.name = "long_straight".into();
    Ok(t)
}

/// Settings for noisy demonstration laps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoNoise {
    /// Weight standard deviation on straights (m).
    pub straight_std: f64,
    /// Weight standard deviation where the base line curves most (m).
    pub corner_std: f64,
    /// Spacing of the noise basis (m).
    pub spacing: f64,
    /// Lateral margin kept to the borders (m).
    pub margin: f64,
}

impl Default for DemoNoise {
    fn default() -> Self {
        Self {
            straight_std: 0.3,
            corner_std: 0.9,
            spacing: 30.0,
            margin: 1.0,
        }
    }
}

impl DemoNoise {
    /// Per-basis weight standard deviations along a base line with the
    /// given curvature, blending from straight to corner level with |κ|.
    pub fn weight_std(&self, basis: &BasisConfig, kappa: &[f64]) -> Vec<f64> {
        let n = kappa.len();
        let peak = kappa.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-9);
        basis
            .centers
            .iter()
            .map(|&c| {
                let i = ((c / basis.length * n as f64).round() as usize) % n;
                let w = (kappa[i].abs() / peak).min(1.0);
                self.straight_std + (self.corner_std - self.straight_std) * w
            })
            .collect()
    }
}

/// Noisy demonstration laps: the elastic-band line plus smooth random
/// lateral deviations, larger in corners, clipped to the inset corridor.
/// Every lap is station-aligned with `track`.
pub fn noisy_demonstrations(
    track: &Track,
    count: usize,
    noise: &DemoNoise,
    seed: u64,
) -> Result<Vec<Vec<Point>>> {
    let base = build_mean_line(track, &MeanLineConfig::default())?;
    let basis = BasisConfig::for_track(track.length(), track.n_stations(), noise.spacing)?;
    let kappa = crate::geometry::Path::new(base.points.clone())?.curvature;
    let std = noise.weight_std(&basis, &kappa);
    let phi = basis.phi();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    (0..count)
        .map(|_| {
            let w: Vec<f64> = std.iter().map(|s| s * unit.sample(&mut rng)).collect();
            let dy: Vec<f64> = (0..track.n_stations())
                .map(|i| {
                    let extra: f64 = (0..basis.n_bf).map(|j| phi[(i, j)] * w[j]).sum();
                    let (lo, hi) = track.corridor(i, noise.margin);
                    (base.offsets[i] + extra).clamp(lo, hi.max(lo))
                })
                .collect();
            Ok(track.reference.offset(&dy))
        })
        .collect()
}
