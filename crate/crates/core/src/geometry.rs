//! Closed race tracks, curvilinear coordinates and corner/straight analysis.
//!
//! Every arc-length operation wraps around: a lap is periodic, so station
//! `N` is station `0` again. Lateral offsets are positive to the left of the
//! direction of travel, i.e. along the normal `(-sin φ, cos φ)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::envelope::{estimate_speed, PerformanceEnvelope};
use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Circular moving average with a window of `2 * half + 1` samples.
pub(crate) fn circular_smooth(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    if n == 0 || half == 0 {
        return values.to_vec();
    }
    let width = 2 * half + 1;
    (0..n)
        .map(|i| {
            (0..width)
                .map(|k| values[(i + n * width + k - half) % n])
                .sum::<f64>()
                / width as f64
        })
        .collect()
}

/// Closed polyline with arc length, heading and curvature at every vertex.
///
/// The closing segment from the last point back to the first is implied; the
/// first point is never repeated at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub points: Vec<Point>,
    /// Cumulative arc length at each vertex, `s[0] = 0`.
    pub s: Vec<f64>,
    /// Length of the segment leaving each vertex.
    pub segment: Vec<f64>,
    pub heading: Vec<f64>,
    pub curvature: Vec<f64>,
    pub length: f64,
}

impl Path {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n < 4 {
            return Err(Error::InvalidTrack(format!(
                "closed line needs at least 4 points, got {n}"
            )));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidTrack("non-finite coordinate".into()));
        }
        let segment: Vec<f64> = (0..n)
            .map(|i| norm(sub(points[(i + 1) % n], points[i])))
            .collect();
        if let Some(i) = segment.iter().position(|&d| d <= 1e-12) {
            return Err(Error::InvalidTrack(format!(
                "arc length not strictly increasing at point {i}"
            )));
        }
        let mut s = Vec::with_capacity(n);
        let mut acc = 0.0;
        for d in &segment {
            s.push(acc);
            acc += d;
        }
        let heading: Vec<f64> = (0..n)
            .map(|i| {
                let d = sub(points[(i + 1) % n], points[(i + n - 1) % n]);
                d[1].atan2(d[0])
            })
            .collect();
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                let prev = (i + n - 1) % n;
                let next = (i + 1) % n;
                wrap_angle(heading[next] - heading[prev]) / (segment[prev] + segment[i])
            })
            .collect();
        let curvature = circular_smooth(&raw, 2);
        Ok(Self {
            points,
            s,
            segment,
            heading,
            curvature,
            length: acc,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Left-pointing unit normal at vertex `i`.
    pub fn normal(&self, i: usize) -> Point {
        let (sin, cos) = self.heading[i].sin_cos();
        [-sin, cos]
    }

    /// Offsets every vertex along its normal.
    pub fn offset(&self, dy: &[f64]) -> Vec<Point> {
        self.points
            .iter()
            .zip(&self.heading)
            .zip(dy)
            .map(|((p, &phi), &d)| [p[0] - phi.sin() * d, p[1] + phi.cos() * d])
            .collect()
    }

    /// Total turning of the loop in radians (±2π for a simple closed curve).
    pub fn total_turning(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| wrap_angle(self.heading[(i + 1) % n] - self.heading[i]))
            .sum()
    }
}

/// Arc-length interpolation along a closed polyline.
fn closed_cumulative(points: &[Point]) -> (Vec<f64>, f64) {
    let n = points.len();
    let mut s = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    s.push(0.0);
    for i in 0..n {
        acc += norm(sub(points[(i + 1) % n], points[i]));
        s.push(acc);
    }
    (s, acc)
}

/// Resamples a closed polyline (and per-vertex values) to `count` points
/// equidistant in arc length, starting at the first vertex.
pub fn resample_closed(
    points: &[Point],
    values: &[&[f64]],
    count: usize,
) -> (Vec<Point>, Vec<Vec<f64>>) {
    let n = points.len();
    let (cum, total) = closed_cumulative(points);
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut out_values: Vec<Vec<f64>> = values.iter().map(|_| Vec::with_capacity(count)).collect();
    let mut seg = 0;
    for k in 0..count {
        let target = k as f64 * step;
        while seg + 1 < n && cum[seg + 1] <= target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let u = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
        let a = points[seg];
        let b = points[(seg + 1) % n];
        out.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
        for (dst, src) in out_values.iter_mut().zip(values) {
            dst.push(src[seg] + u * (src[(seg + 1) % n] - src[seg]));
        }
    }
    (out, out_values)
}

/// Which line a track's reference was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    Centerline,
    MeanLine,
}

/// A closed circuit: reference line plus left/right widths at each station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub name: String,
    pub reference: Path,
    pub left_width: Vec<f64>,
    pub right_width: Vec<f64>,
    #[serde(default)]
    pub reference_kind: ReferenceKind,
}

/// Result of projecting a point onto the reference line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub segment: usize,
    /// Fraction along `segment`.
    pub u: f64,
    /// Nearest station index.
    pub station: usize,
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed lateral offset, positive to the left.
    pub lateral: f64,
    pub distance: f64,
}

impl Track {
    /// Builds a track from station-aligned reference points and widths.
    ///
    /// A repeated closing point (last equal to first within 1e-6 m) is
    /// dropped. The reference is used as given, without resampling.
    pub fn new(
        name: impl Into<String>,
        mut points: Vec<Point>,
        mut left_width: Vec<f64>,
        mut right_width: Vec<f64>,
    ) -> Result<Self> {
        if points.len() != left_width.len() || points.len() != right_width.len() {
            return Err(Error::InvalidTrack(
                "reference points and widths differ in length".into(),
            ));
        }
        if points.len() >= 2 && norm(sub(points[0], points[points.len() - 1])) <= 1e-6 {
            points.pop();
            left_width.pop();
            right_width.pop();
        }
        for (i, (&l, &r)) in left_width.iter().zip(&right_width).enumerate() {
            if !(l.is_finite() && r.is_finite()) || l < 0.0 || r < 0.0 || l + r <= 0.0 {
                return Err(Error::InvalidTrack(format!(
                    "station {i}: widths must be non-negative with positive sum"
                )));
            }
        }
        let reference = Path::new(points)?;
        let n = reference.len();
        if let Some(i) = (0..n).find(|&i| {
            wrap_angle(reference.heading[(i + 1) % n] - reference.heading[i]).abs() > 0.75 * PI
        }) {
            return Err(Error::InvalidTrack(format!("reference line folds back at point {i}")));
        }
        let turning = reference.total_turning().abs();
        if (turning - 2.0 * PI).abs() > 0.5 {
            return Err(Error::InvalidTrack(format!(
                "reference line does not form a simple closed loop (total turning {turning:.3} rad)"
            )));
        }
        Ok(Self {
            name: name.into(),
            reference,
            left_width,
            right_width,
            reference_kind: ReferenceKind::Centerline,
        })
    }

    /// Builds a track and resamples it to stations equidistant in arc length,
    /// spaced as close to `spacing` as an integer station count allows.
    pub fn resampled(
        name: impl Into<String>,
        points: Vec<Point>,
        left_width: Vec<f64>,
        right_width: Vec<f64>,
        spacing: f64,
    ) -> Result<Self> {
        let raw = Track::new(name, points, left_width, right_width)?;
        raw.resample(spacing)
    }

    pub fn resample(&self, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidTrack("station spacing must be positive".into()));
        }
        let count = ((self.reference.length / spacing).round() as usize).max(8);
        let (points, values) = resample_closed(
            &self.reference.points,
            &[&self.left_width, &self.right_width],
            count,
        );
        let mut values = values.into_iter();
        let left = values.next().unwrap_or_default();
        let right = values.next().unwrap_or_default();
        let mut track = Track::new(self.name.clone(), points, left, right)?;
        track.reference_kind = self.reference_kind;
        Ok(track)
    }

    pub fn n_stations(&self) -> usize {
        self.reference.len()
    }

    pub fn length(&self) -> f64 {
        self.reference.length
    }

    /// Mean station spacing.
    pub fn spacing(&self) -> f64 {
        self.reference.length / self.n_stations() as f64
    }

    pub fn stations(&self) -> &[f64] {
        &self.reference.s
    }

    pub fn normal(&self, i: usize) -> Point {
        self.reference.normal(i)
    }

    pub fn left_border(&self) -> Vec<Point> {
        self.reference.offset(&self.left_width)
    }

    pub fn right_border(&self) -> Vec<Point> {
        let neg: Vec<f64> = self.right_width.iter().map(|w| -w).collect();
        self.reference.offset(&neg)
    }

    /// Permissible lateral interval `[lo, hi]` at a station once both borders
    /// are inset by `margin`. `lo > hi` marks an infeasible station.
    pub fn corridor(&self, station: usize, margin: f64) -> (f64, f64) {
        (
            -self.right_width[station] + margin,
            self.left_width[station] - margin,
        )
    }

    /// Station index whose arc length is closest to `s` (wrapping).
    pub fn station_at(&self, s: f64) -> usize {
        let n = self.n_stations();
        let s = s.rem_euclid(self.length());
        let idx = self.reference.s.partition_point(|&x| x <= s);
        let lo = idx.saturating_sub(1);
        let hi = idx % n;
        let d_lo = (s - self.reference.s[lo]).abs();
        let d_hi = if hi == 0 {
            (self.length() - s).abs()
        } else {
            (self.reference.s[hi] - s).abs()
        };
        if d_hi < d_lo {
            hi
        } else {
            lo
        }
    }

    /// Lateral offset of every point of a station-aligned line relative to
    /// the reference (component along the station normal).
    pub fn lateral_offsets(&self, line: &[Point]) -> Vec<f64> {
        line.iter()
            .enumerate()
            .map(|(i, q)| dot(sub(*q, self.reference.points[i]), self.normal(i)))
            .collect()
    }

    /// Projects a point onto the reference polyline.
    ///
    /// With a hint, only segments within `window` of it are searched; the
    /// search falls back to the full loop when the local result is far off.
    pub fn locate(&self, q: Point, hint: Option<usize>, window: usize) -> Location {
        let n = self.n_stations();
        let local = hint.map(|h| {
            let w = window.min(n / 2);
            self.locate_in(q, (0..=2 * w).map(|k| (h + n * 2 + k - w) % n))
        });
        let far = 3.0 * (self.left_width.iter().chain(&self.right_width).fold(0.0f64, |a, &b| a.max(b))) + 5.0;
        match local {
            Some(loc) if loc.distance <= far => loc,
            _ => self.locate_in(q, 0..n),
        }
    }

    fn locate_in(&self, q: Point, segments: impl Iterator<Item = usize>) -> Location {
        let n = self.n_stations();
        let pts = &self.reference.points;
        let mut best: Option<(f64, usize, f64)> = None;
        for i in segments {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            let d = sub(b, a);
            let len2 = dot(d, d);
            let u = (dot(sub(q, a), d) / len2).clamp(0.0, 1.0);
            let foot = [a[0] + u * d[0], a[1] + u * d[1]];
            let dist2 = dot(sub(q, foot), sub(q, foot));
            if best.map_or(true, |(b2, _, _)| dist2 < b2) {
                best = Some((dist2, i, u));
            }
        }
        let (dist2, seg, u) = best.unwrap_or((f64::INFINITY, 0, 0.0));
        let a = pts[seg];
        let b = pts[(seg + 1) % n];
        let d = sub(b, a);
        let lateral = cross(d, sub(q, a)) / norm(d);
        let station = if u < 0.5 { seg } else { (seg + 1) % n };
        Location {
            segment: seg,
            u,
            station,
            s: self.reference.s[seg] + u * self.reference.segment[seg],
            lateral,
            distance: dist2.sqrt(),
        }
    }
}

/// A line described relative to a track reference: lateral deviation and the
/// traced line's own curvature and heading at each reference station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvilinearTrace {
    pub s: Vec<f64>,
    pub dy: Vec<f64>,
    pub kappa: Vec<f64>,
    pub heading: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    /// Half-width of the admissible lateral band, in track widths.
    pub band_factor: f64,
    /// Candidates closer than this (m) in distance are considered tied.
    pub tie_tolerance: f64,
    /// Segments searched on either side of the previous match.
    pub search_window: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            band_factor: 3.0,
            tie_tolerance: 1e-9,
            search_window: 40,
        }
    }
}

/// Maps a closed Cartesian line to lateral deviations along the normals of
/// the track reference, plus the traced line's curvature.
pub fn to_curvilinear(
    line: &[Point],
    track: &Track,
    config: &ProjectionConfig,
) -> Result<CurvilinearTrace> {
    let m = line.len();
    if m < 4 {
        return Err(Error::InvalidTrack("line needs at least 4 points".into()));
    }
    let n = track.n_stations();
    let window = config.search_window + 2 * m.div_ceil(n);
    let mut dy = Vec::with_capacity(n);
    let mut prev: Option<(f64, usize)> = None;
    for i in 0..n {
        let p = track.reference.points[i];
        let nrm = track.normal(i);
        let band = config.band_factor * (track.left_width[i] + track.right_width[i]);
        let collect = |segments: &mut dyn Iterator<Item = usize>| -> Vec<(f64, usize)> {
            let mut out = Vec::new();
            for j in segments {
                let a = line[j];
                let d = sub(line[(j + 1) % m], a);
                let denom = cross(nrm, d);
                if denom.abs() < 1e-14 {
                    continue;
                }
                let w = sub(a, p);
                let t = cross(w, d) / denom;
                let u = cross(w, nrm) / denom;
                if (-1e-12..=1.0 + 1e-12).contains(&u) {
                    out.push((t, j));
                }
            }
            out
        };
        let mut candidates = match prev {
            Some((_, j)) => {
                let w = window.min(m / 2);
                collect(&mut (0..=2 * w).map(|k| (j + 2 * m + k - w) % m))
            }
            None => Vec::new(),
        };
        let in_band = |c: &[(f64, usize)]| c.iter().any(|(t, _)| t.abs() <= band);
        if !in_band(&candidates) {
            candidates = collect(&mut (0..m));
        }
        let reference = prev.map_or(0.0, |(t, _)| t);
        let mut admissible: Vec<(f64, usize)> = candidates
            .iter()
            .copied()
            .filter(|(t, _)| t.abs() <= band)
            .collect();
        if admissible.is_empty() {
            let offset = candidates
                .iter()
                .map(|(t, _)| *t)
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(f64::NAN);
            return Err(Error::OutOfBand { station: i, offset });
        }
        admissible.sort_by(|a, b| (a.0 - reference).abs().total_cmp(&(b.0 - reference).abs()));
        let (t0, j0) = admissible[0];
        if let Some(&(t1, _)) = admissible.get(1) {
            let tied = ((t1 - reference).abs() - (t0 - reference).abs()).abs() <= config.tie_tolerance;
            if tied && (t1 - t0).abs() > config.tie_tolerance {
                return Err(Error::AmbiguousProjection { station: i });
            }
        }
        dy.push(t0);
        prev = Some((t0, j0));
    }
    let traced = Path::new(track.reference.offset(&dy))?;
    Ok(CurvilinearTrace {
        s: track.reference.s.clone(),
        dy,
        kappa: traced.curvature,
        heading: traced.heading,
    })
}

/// Reconstructs the Cartesian line `x' - sin φ · dy, y' + cos φ · dy` where
/// `φ` is the reference heading at each station.
pub fn from_curvilinear(trace: &CurvilinearTrace, track: &Track) -> Vec<Point> {
    track.reference.offset(&trace.dy)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// |κ| above which a corner starts (1/m).
    pub kappa_threshold: f64,
    /// Fractional hysteresis: a corner ends below `(1 - h) * threshold`.
    pub hysteresis: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            kappa_threshold: 0.01,
            hysteresis: 0.2,
        }
    }
}

/// Half-open circular station interval `[start, end)`; `end` may be smaller
/// than `start` when the interval wraps past the start/finish line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn len(&self, n: usize) -> usize {
        if self.end == self.start {
            n
        } else {
            (self.end + n - self.start) % n
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize, n: usize) -> bool {
        (i + n - self.start) % n < self.len(n)
    }

    pub fn stations(&self, n: usize) -> impl Iterator<Item = usize> {
        let start = self.start;
        (0..self.len(n)).map(move |k| (start + k) % n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub span: Interval,
    pub apex: usize,
    pub entry_s: f64,
    pub apex_s: f64,
    pub exit_s: f64,
    pub signed_peak_curvature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Straight {
    pub span: Interval,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrakeZone {
    pub brake: usize,
    pub brake_s: f64,
    pub corner_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisWarning {
    NoCornersFound,
    FullLoopCorner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackAnalysis {
    pub n_stations: usize,
    pub length: f64,
    pub corners: Vec<Corner>,
    pub straights: Vec<Straight>,
    pub brake_zones: Vec<BrakeZone>,
    pub warning: Option<AnalysisWarning>,
    /// Curvature of the analysed line at each station.
    pub curvature: Vec<f64>,
}

impl TrackAnalysis {
    /// Index of the corner containing a station.
    pub fn corner_at(&self, station: usize) -> Option<usize> {
        self.corners
            .iter()
            .position(|c| c.span.contains(station, self.n_stations))
    }

    /// Corner containing the station, or the last corner that ended before
    /// it when the station lies on a straight.
    pub fn corner_at_or_before(&self, station: usize) -> Option<usize> {
        if let Some(k) = self.corner_at(station) {
            return Some(k);
        }
        let n = self.n_stations;
        self.corners
            .iter()
            .enumerate()
            .min_by_key(|(_, c)| (station + n - c.span.end % n) % n)
            .map(|(k, _)| k)
    }

    /// Straight leading into the given corner, if any.
    pub fn straight_before(&self, corner: usize) -> Option<usize> {
        let entry = self.corners.get(corner)?.span.start;
        self.straights
            .iter()
            .position(|st| st.span.end % self.n_stations == entry)
    }

    /// Corner following a straight.
    pub fn corner_after(&self, straight: usize) -> Option<usize> {
        let end = self.straights.get(straight)?.span.end % self.n_stations;
        self.corners.iter().position(|c| c.span.start == end)
    }

    /// Brake station of a corner (its entry when no brake zone is known).
    pub fn brake_station(&self, corner: usize) -> usize {
        self.brake_zones
            .iter()
            .find(|b| b.corner_index == corner)
            .map_or(self.corners[corner].span.start, |b| b.brake)
    }
}

/// Splits a station-aligned line into corners (hysteresis on |κ|) and
/// straights, locates apexes and, given an envelope, brake points.
pub fn analyse_track(
    line: &[Point],
    track: &Track,
    config: &AnalysisConfig,
    envelope: Option<&PerformanceEnvelope>,
) -> Result<TrackAnalysis> {
    let n = track.n_stations();
    if line.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "line has {} points, track has {n} stations",
            line.len()
        )));
    }
    let path = Path::new(line.to_vec())?;
    let kappa = path.curvature.clone();
    let abs: Vec<f64> = kappa.iter().map(|k| k.abs()).collect();
    let high = config.kappa_threshold;
    let low = config.kappa_threshold * (1.0 - config.hysteresis);
    let s_of = |i: usize| track.reference.s[i % n];

    let make_corner = |span: Interval| {
        let peak = span
            .stations(n)
            .map(|i| abs[i])
            .fold(0.0f64, f64::max);
        let plateau: Vec<usize> = span
            .stations(n)
            .filter(|&i| abs[i] >= peak * (1.0 - 1e-3))
            .collect();
        let apex = plateau[plateau.len() / 2];
        Corner {
            span,
            apex,
            entry_s: s_of(span.start),
            apex_s: s_of(apex),
            exit_s: s_of(span.end),
            signed_peak_curvature: kappa[apex],
        }
    };

    let mut corners = Vec::new();
    let mut straights = Vec::new();
    let mut warning = None;
    let max_abs = abs.iter().fold(0.0f64, |a, &b| a.max(b));
    match abs.iter().position(|&a| a < low) {
        _ if max_abs <= high => {
            warning = Some(AnalysisWarning::NoCornersFound);
            straights.push(Straight {
                span: Interval { start: 0, end: 0 },
                start_s: 0.0,
                end_s: s_of(0),
            });
        }
        None => {
            warning = Some(AnalysisWarning::FullLoopCorner);
            corners.push(make_corner(Interval { start: 0, end: 0 }));
        }
        Some(start) => {
            let mut open: Option<usize> = None;
            for k in 0..n {
                let i = (start + k) % n;
                if let Some(begin) = open {
                    let sign_flip = kappa[i].signum() != kappa[begin].signum() && abs[i] > high;
                    if abs[i] < low || sign_flip {
                        corners.push(make_corner(Interval { start: begin, end: i }));
                        open = sign_flip.then_some(i);
                    }
                } else if abs[i] > high {
                    open = Some(i);
                }
            }
            if let Some(begin) = open {
                corners.push(make_corner(Interval { start: begin, end: start }));
            }
            corners.sort_by_key(|c| c.span.start);
            let count = corners.len();
            for k in 0..count {
                let from = corners[k].span.end % n;
                let to = corners[(k + 1) % count].span.start;
                if from != to {
                    straights.push(Straight {
                        span: Interval { start: from, end: to },
                        start_s: s_of(from),
                        end_s: s_of(to),
                    });
                }
            }
            straights.sort_by_key(|s| s.span.start);
        }
    }

    let mut brake_zones = Vec::new();
    if let (Some(env), false) = (envelope, corners.is_empty()) {
        let profile = estimate_speed(line, env)?;
        let v = &profile.v;
        for (idx, c) in corners.iter().enumerate() {
            let mut j = c.span.start;
            for _ in 0..n {
                let prev = (j + n - 1) % n;
                if v[prev] > v[j] + 1e-9 {
                    j = prev;
                } else {
                    break;
                }
            }
            brake_zones.push(BrakeZone {
                brake: j,
                brake_s: s_of(j),
                corner_index: idx,
            });
        }
    }

    Ok(TrackAnalysis {
        n_stations: n,
        length: track.length(),
        corners,
        straights,
        brake_zones,
        warning,
        curvature: kappa,
    })
}
