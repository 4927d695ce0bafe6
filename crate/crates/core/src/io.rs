//! File formats.
//!
//! Track files are CSV with the header `x,y,w_left,w_right`: one row per
//! reference point in driving order, widths in meters to the left and right
//! border. The loop closes implicitly; a last row repeating the first is
//! dropped. Lines starting with `#` are comments.
//!
//! Lap files are CSV with the header
//! `t,x,y,v,steer,throttle,brake[,s,lateral,balance,off_track]`, one row per
//! sample. Demonstrations need only the first seven columns; simulated laps
//! fill all of them. Writers put `# key: value` comments (seed, config
//! digest) above the header.
//!
//! Everything else (ProMPs, libraries, generalized lines, reports) is JSON.

use std::fs;
use std::io::{Read, Write};
use std::path::Path as FsPath;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Track};
use crate::lap::LapLog;

const TRACK_COLUMNS: [&str; 4] = ["x", "y", "w_left", "w_right"];
const LAP_COLUMNS: [&str; 7] = ["t", "x", "y", "v", "steer", "throttle", "brake"];

fn schema(path: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    schema(path, line, e.to_string())
}

fn check_header(path: &str, headers: &csv::StringRecord, required: &[&str]) -> Result<()> {
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(schema(path, 1, format!("missing column `{col}`")));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TrackRow {
    x: f64,
    y: f64,
    w_left: f64,
    w_right: f64,
}

/// Parses a track file. `path` only labels errors.
pub fn parse_track<R: Read>(input: R, name: &str, path: &str) -> Result<Track> {
    let mut rdr = csv_reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &headers, &TRACK_COLUMNS)?;
    let mut pts: Vec<Point> = Vec::new();
    let (mut left, mut right) = (Vec::new(), Vec::new());
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: TrackRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| schema(path, line, e.to_string()))?;
        if ![row.x, row.y, row.w_left, row.w_right].iter().all(|v| v.is_finite()) {
            return Err(schema(path, line, "non-finite value"));
        }
        if row.w_left <= 0.0 || row.w_right <= 0.0 {
            return Err(schema(path, line, "widths must be positive"));
        }
        if let Some(&prev) = pts.last() {
            if crate::geometry::norm(crate::geometry::sub([row.x, row.y], prev)) < 1e-9 {
                return Err(schema(path, line, "repeated point: arc length must increase"));
            }
        }
        pts.push([row.x, row.y]);
        left.push(row.w_left);
        right.push(row.w_right);
        lines.push(line);
    }
    if pts.len() >= 2 {
        let last = pts.len() - 1;
        if crate::geometry::norm(crate::geometry::sub(pts[last], pts[0])) < 1e-9 {
            pts.pop();
            left.pop();
            right.pop();
        }
    }
    if pts.len() < 4 {
        return Err(schema(path, lines.last().copied().unwrap_or(1), "need at least 4 points"));
    }
    // closure: the implicit last segment must not be a jump
    let seg: Vec<f64> = (0..pts.len())
        .map(|i| crate::geometry::norm(crate::geometry::sub(pts[(i + 1) % pts.len()], pts[i])))
        .collect();
    let mut sorted = seg.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if seg[seg.len() - 1] > 10.0 * median.max(1e-9) {
        return Err(schema(path, lines[pts.len() - 1], "track does not close"));
    }
    Track::new(name, pts, left, right)
}

pub fn read_track(path: impl AsRef<FsPath>) -> Result<Track> {
    let path = path.as_ref();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("track");
    parse_track(fs::File::open(path)?, name, &path.display().to_string())
}

pub fn write_track<W: Write>(out: W, track: &Track) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACK_COLUMNS)?;
    for (i, p) in track.reference.points.iter().enumerate() {
        w.write_record(&[
            p[0].to_string(),
            p[1].to_string(),
            track.left_width[i].to_string(),
            track.right_width[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a lap file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LapRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub lateral: Option<f64>,
    #[serde(default)]
    pub balance: Option<f64>,
    #[serde(default)]
    pub off_track: Option<bool>,
}

/// Lap file rows from a simulated lap.
pub fn lap_records(log: &LapLog) -> Vec<LapRecord> {
    log.samples
        .iter()
        .map(|s| LapRecord {
            t: s.t,
            x: s.state.x,
            y: s.state.y,
            v: s.state.speed(),
            steer: s.action.steer,
            throttle: s.action.throttle,
            brake: s.action.brake,
            s: Some(s.s),
            lateral: Some(s.lateral),
            balance: Some(s.balance),
            off_track: Some(s.off_track),
        })
        .collect()
}

/// Writes a lap file. `meta` entries become `# key: value` comments.
pub fn write_lap<W: Write>(mut out: W, records: &[LapRecord], meta: &[(&str, String)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(LAP_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_lap<R: Read>(input: R, path: &str) -> Result<Vec<LapRecord>> {
    let mut rdr = csv_reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &headers, &LAP_COLUMNS)?;
    let mut out: Vec<LapRecord> = Vec::new();
    let mut line = 1;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        line = rec.position().map_or(0, |p| p.line());
        let r: LapRecord = rec
            .deserialize(Some(&headers))
            .map_err(|e| schema(path, line, e.to_string()))?;
        if ![r.t, r.x, r.y, r.v, r.steer, r.throttle, r.brake].iter().all(|v| v.is_finite()) {
            return Err(schema(path, line, "non-finite value"));
        }
        if out.last().is_some_and(|p| r.t <= p.t) {
            return Err(schema(path, line, "time must increase"));
        }
        out.push(r);
    }
    if out.len() < 4 {
        return Err(schema(path, line, "need at least 4 samples"));
    }
    Ok(out)
}

pub fn read_lap(path: impl AsRef<FsPath>) -> Result<Vec<LapRecord>> {
    let path = path.as_ref();
    parse_lap(fs::File::open(path)?, &path.display().to_string())
}

/// Cartesian points of a lap, for building a library.
pub fn lap_points(records: &[LapRecord]) -> Vec<Point> {
    records.iter().map(|r| [r.x, r.y]).collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<FsPath>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<FsPath>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Plot data for a set of lines: `line,station,x,y`.
pub fn write_lines<W: Write>(out: W, lines: &[Vec<Point>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["line", "station", "x", "y"])?;
    for (k, line) in lines.iter().enumerate() {
        for (i, p) in line.iter().enumerate() {
            w.write_record(&[k.to_string(), i.to_string(), p[0].to_string(), p[1].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Minimal SVG drawing of a track's borders with polylines on top.
pub fn render_svg(track: &Track, lines: &[(&[Point], &str)]) -> String {
    let left = track.left_border();
    let right = track.right_border();
    let all = left.iter().chain(&right);
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in all {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let pad = 10.0;
    let poly = |pts: &[Point], stroke: &str, width: f64| {
        let coords: Vec<String> = pts
            .iter()
            .chain(pts.first())
            .map(|p| format!("{:.2},{:.2}", p[0], y1 + y0 - p[1]))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
            coords.join(" ")
        )
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.1} {:.1} {:.1} {:.1}\">\n",
        x0 - pad,
        y0 - pad,
        x1 - x0 + 2.0 * pad,
        y1 - y0 + 2.0 * pad
    );
    svg += &poly(&left, "#333", 1.0);
    svg += &poly(&right, "#333", 1.0);
    for (pts, color) in lines {
        svg += &poly(pts, color, 0.6);
    }
    svg += "</svg>\n";
    svg
}
