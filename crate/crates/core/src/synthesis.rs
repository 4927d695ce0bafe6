//! Driving-line synthesis on unseen tracks: demonstration library, elastic
//! band mean line, variance transfer by curvature matching, and sampling.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envelope::{speed_profile_on, PerformanceEnvelope};
use crate::error::{Error, Result};
use crate::geometry::{to_curvilinear, Path, Point, ProjectionConfig, ReferenceKind, Track};
use crate::promp::{repair_psd, symmetrize, BasisConfig, ProMp, Projector, DEFAULT_CENTER_SPACING};

// ---------------------------------------------------------------------------
// Banded symmetric solver

/// Symmetric positive-definite matrix stored by rows from the first nonzero
/// column to the diagonal. Cholesky fill stays inside that profile, so a
/// cyclic band factors in linear time.
struct Skyline {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl Skyline {
    fn new(first: Vec<usize>) -> Self {
        let rows = first.iter().enumerate().map(|(i, &f)| vec![0.0; i - f + 1]).collect();
        Self { first, rows }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let f = self.first[r];
        debug_assert!(c >= f);
        self.rows[r][c - f] += v;
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        let f = self.first[r];
        if c < f {
            0.0
        } else {
            self.rows[r][c - f]
        }
    }

    /// In-place `L Lᵀ` factorization.
    fn factor(mut self) -> Option<Self> {
        let n = self.rows.len();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let mut sum = self.rows[i][j - fi];
                for k in start..j {
                    sum -= self.rows[i][k - fi] * self.get(j, k);
                }
                if j < i {
                    self.rows[i][j - fi] = sum / self.get(j, j);
                } else {
                    if !(sum > 0.0) {
                        return None;
                    }
                    self.rows[i][i - fi] = sum.sqrt();
                }
            }
        }
        Some(self)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.rows[i][k - fi] * y[k];
            }
            y[i] = s / self.rows[i][i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.rows[i][i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.rows[i][k - fi] * yi;
            }
        }
        y
    }
}

// ---------------------------------------------------------------------------
// Elastic band

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanLineConfig {
    /// Borders are inset by this much (m).
    pub half_width: f64,
    /// Quadratic penalty weight on corridor violations.
    pub penalty: f64,
    /// Small pull toward the reference line; breaks ties on flat energy.
    pub regularization: f64,
    pub max_iterations: usize,
    /// Converged once no node moves farther than this between iterations (m).
    pub tolerance: f64,
}

impl Default for MeanLineConfig {
    fn default() -> Self {
        Self {
            half_width: 1.0,
            penalty: 1e6,
            regularization: 1e-8,
            max_iterations: 100,
            tolerance: 1e-4,
        }
    }
}

/// Elastic-band result. Nodes sit on the station normals of the track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanLine {
    pub points: Vec<Point>,
    /// Lateral offset of each node from the reference (left positive).
    pub offsets: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Stations where the inset corridor is empty; the node is centered
    /// between the borders there.
    pub infeasible: Vec<usize>,
}

/// Relaxes a band whose node `i` moves along `normals[i]` from `base[i]`.
///
/// Energy: squared second differences of the node positions plus a
/// quadratic penalty outside `[lo_i, hi_i]`, minimized by an active-set
/// iteration. An open band keeps its end nodes at their lower bound
/// midpoints.
pub fn relax_band(
    base: &[Point],
    normals: &[Point],
    bounds: &[(f64, f64)],
    closed: bool,
    config: &MeanLineConfig,
) -> MeanLine {
    let n = base.len();
    let mut infeasible = Vec::new();
    let bounds: Vec<(f64, f64)> = bounds
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            if lo > hi {
                infeasible.push(i);
                let mid = 0.5 * (lo + hi);
                (mid, mid)
            } else {
                (lo, hi)
            }
        })
        .collect();

    // rows of the curvature energy: node i-1, i, i+1 with weights 1, -2, 1
    let terms: Vec<[usize; 3]> = if closed {
        (0..n).map(|i| [(i + n - 1) % n, i, (i + 1) % n]).collect()
    } else {
        (1..n - 1).map(|i| [i - 1, i, i + 1]).collect()
    };
    let w = [1.0, -2.0, 1.0];
    let first: Vec<usize> = (0..n)
        .map(|i| if closed && i + 2 >= n { 0 } else { i.saturating_sub(2) })
        .collect();
    let mut q = Skyline::new(first);
    let mut lin = vec![0.0; n];
    for t in &terms {
        let c = [0, 1].map(|ax| (0..3).map(|k| w[k] * base[t[k]][ax]).sum::<f64>());
        for a in 0..3 {
            let na = normals[t[a]];
            lin[t[a]] += w[a] * (na[0] * c[0] + na[1] * c[1]);
            for b in 0..=a {
                let nb = normals[t[b]];
                let v = w[a] * w[b] * (na[0] * nb[0] + na[1] * nb[1]);
                // symmetric storage holds (p, q) and (q, p) once; only a
                // repeated node within one term doubles up on the diagonal
                if t[a] == t[b] && a != b {
                    q.add(t[a], t[b], 2.0 * v);
                } else {
                    q.add(t[a], t[b], v);
                }
            }
        }
    }
    for i in 0..n {
        q.add(i, i, config.regularization);
    }
    let pinned = |i: usize| !closed && (i == 0 || i == n - 1);

    let mut d = vec![0.0; n];
    let mut active = vec![0i8; n];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..config.max_iterations.max(1) {
        iterations = it + 1;
        let mut m = Skyline {
            first: q.first.clone(),
            rows: q.rows.clone(),
        };
        let mut rhs: Vec<f64> = lin.iter().map(|v| -v).collect();
        for i in 0..n {
            let (lo, hi) = bounds[i];
            let target = if pinned(i) {
                Some((0.5 * (lo + hi), config.penalty * 1e3))
            } else {
                match active[i] {
                    -1 => Some((lo, config.penalty)),
                    1 => Some((hi, config.penalty)),
                    _ => None,
                }
            };
            if let Some((b, rho)) = target {
                m.add(i, i, rho);
                rhs[i] += rho * b;
            }
        }
        let Some(chol) = m.factor() else {
            warn!("elastic band system is not positive definite");
            break;
        };
        let next = chol.solve(&rhs);
        let moved = next
            .iter()
            .zip(&d)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        d = next;
        let mut changed = false;
        for i in 0..n {
            let (lo, hi) = bounds[i];
            let want = if d[i] < lo - 1e-12 {
                -1
            } else if d[i] > hi + 1e-12 {
                1
            } else {
                0
            };
            // nodes leave the active set only once their solution lies inside
            let new = if active[i] != 0 && want == 0 { 0 } else if want != 0 { want } else { active[i] };
            if new != active[i] {
                active[i] = new;
                changed = true;
            }
        }
        if !changed && moved < config.tolerance {
            converged = true;
            break;
        }
    }
    for (i, v) in d.iter_mut().enumerate() {
        *v = v.clamp(bounds[i].0, bounds[i].1);
    }
    let points = (0..n)
        .map(|i| [base[i][0] + normals[i][0] * d[i], base[i][1] + normals[i][1] * d[i]])
        .collect();
    MeanLine {
        points,
        offsets: d,
        converged,
        iterations,
        infeasible,
    }
}

/// Smooth, collision-free mean driving line inside the borders inset by the
/// vehicle half-width.
pub fn build_mean_line(track: &Track, config: &MeanLineConfig) -> Result<MeanLine> {
    let n = track.n_stations();
    let normals: Vec<Point> = (0..n).map(|i| track.normal(i)).collect();
    let bounds: Vec<(f64, f64)> = (0..n).map(|i| track.corridor(i, config.half_width)).collect();
    let line = relax_band(&track.reference.points, &normals, &bounds, true, config);
    if !line.converged {
        warn!(
            "elastic band on {} did not converge in {} iterations",
            track.name, line.iterations
        );
    }
    if !line.infeasible.is_empty() {
        warn!(
            "{} stations of {} are narrower than the vehicle",
            line.infeasible.len(),
            track.name
        );
    }
    Ok(line)
}

// ---------------------------------------------------------------------------
// Demonstration library

/// Laps recorded on one track, each a closed Cartesian line.
#[derive(Clone, Debug)]
pub struct TrackDemos {
    pub track: Track,
    pub laps: Vec<Vec<Point>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    /// Distance between basis centers (m).
    pub center_spacing: f64,
    pub projection: ProjectionConfig,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            center_spacing: DEFAULT_CENTER_SPACING,
            projection: ProjectionConfig::default(),
        }
    }
}

/// Per-track ProMP over `(dy, κ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub track: Track,
    pub promp: ProMp,
    pub laps: usize,
    /// RMS error of the basis reconstruction of `dy`, over all laps (m).
    pub fit_rms: f64,
}

impl LibraryEntry {
    pub fn mean_kappa(&self) -> Vec<f64> {
        self.promp.mean_trajectory()[1].clone()
    }

    /// `dy` block of the weight covariance.
    pub fn dy_covariance(&self) -> DMatrix<f64> {
        let nb = self.promp.basis.n_bf;
        self.promp.sigma_w.view((0, 0), (nb, nb)).into_owned()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationLibrary {
    pub entries: Vec<LibraryEntry>,
}

/// Maps every lap to `(dy, κ)` along its track, projects onto the basis and
/// fits one Gaussian per track.
pub fn build_library(demos: &[TrackDemos], config: &LibraryConfig) -> Result<DemonstrationLibrary> {
    let mut entries = Vec::with_capacity(demos.len());
    for demo in demos {
        let track = &demo.track;
        if demo.laps.is_empty() {
            return Err(Error::InsufficientDemos(track.name.clone()));
        }
        if demo.laps.len() < 3 {
            warn!("only {} laps on {}; 3 or more recommended", demo.laps.len(), track.name);
        }
        let basis = BasisConfig::for_track(track.length(), track.n_stations(), config.center_spacing)?;
        let projector = Projector::new(&basis)?;
        let mut weights = Vec::with_capacity(demo.laps.len());
        let mut sq = 0.0;
        for lap in &demo.laps {
            let trace = to_curvilinear(lap, track, &config.projection)?;
            let w = projector.fit(&[trace.dy.clone(), trace.kappa])?;
            let back = projector.reconstruct(&w);
            sq += back[0].iter().zip(&trace.dy).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            weights.push(w);
        }
        let (mu, sigma) = crate::promp::fit_distribution(&weights)?;
        let promp = ProMp::new(basis, vec!["dy".into(), "kappa".into()], mu, sigma)?;
        entries.push(LibraryEntry {
            track: track.clone(),
            promp,
            laps: demo.laps.len(),
            fit_rms: (sq / (demo.laps.len() * track.n_stations()) as f64).sqrt(),
        });
    }
    Ok(DemonstrationLibrary { entries })
}

// ---------------------------------------------------------------------------
// Variance transfer

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// Curvature window length (m).
    pub window: f64,
    /// Distance between window centers (m); half the window by default.
    pub stride: f64,
    /// Samples per window when comparing curvature.
    pub samples: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            window: 120.0,
            stride: 60.0,
            samples: 25,
        }
    }
}

/// Where one window of the new track was matched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMatch {
    pub center_s: f64,
    pub entry: usize,
    pub matched_s: f64,
    pub distance: f64,
}

/// Values of a closed, equidistantly sampled signal at `count` points
/// spanning `[center - half, center + half]`, linearly interpolated.
fn window_samples(values: &[f64], length: f64, center: f64, half: f64, count: usize) -> Vec<f64> {
    let n = values.len();
    let h = length / n as f64;
    (0..count)
        .map(|k| {
            let s = center - half + 2.0 * half * k as f64 / (count - 1) as f64;
            let x = s.rem_euclid(length) / h;
            let i = x.floor() as usize % n;
            let u = x - x.floor();
            values[i] * (1.0 - u) + values[(i + 1) % n] * u
        })
        .collect()
}

/// Transfers the lateral weight covariance of the library onto a new track.
///
/// Windows of `config.window` metres are centered every `config.stride`
/// metres along `mean_kappa`. Each window is matched to the library window
/// (any entry, any station) with the smallest mean absolute curvature
/// difference; ties go to the earliest entry and station. Basis indices of
/// the new track inside the window take the covariance of the nearest basis
/// indices of the matched window. Overlapping windows are blended with
/// triangular weights falling to zero at the window edge, then the result is
/// symmetrized and repaired to PSD.
pub fn estimate_variance(
    mean_kappa: &[f64],
    basis: &BasisConfig,
    library: &DemonstrationLibrary,
    config: &TransferConfig,
) -> Result<(DMatrix<f64>, Vec<WindowMatch>)> {
    if library.entries.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    if mean_kappa.len() != basis.n_stations {
        return Err(Error::DimensionMismatch("curvature length vs stations".into()));
    }
    let half = config.window / 2.0;
    let length = basis.length;
    let count = config.samples.max(3);
    let n_windows = ((length / config.stride).round() as usize).max(1);
    let stride = length / n_windows as f64;
    let lib_kappa: Vec<Vec<f64>> = library.entries.iter().map(|e| e.mean_kappa()).collect();
    let lib_cov: Vec<DMatrix<f64>> = library.entries.iter().map(|e| e.dy_covariance()).collect();

    let nb = basis.n_bf;
    let mut acc = DMatrix::<f64>::zeros(nb, nb);
    let mut weight = DMatrix::<f64>::zeros(nb, nb);
    let mut matches = Vec::with_capacity(n_windows);
    for wdx in 0..n_windows {
        let center = wdx as f64 * stride;
        let target = window_samples(mean_kappa, length, center, half, count);
        let mut best: Option<(f64, usize, usize)> = None;
        for (e, kappa) in lib_kappa.iter().enumerate() {
            let lib_len = library.entries[e].track.length();
            let h = lib_len / kappa.len() as f64;
            for st in 0..kappa.len() {
                let cand = window_samples(kappa, lib_len, st as f64 * h, half, count);
                let dist = cand.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>() / count as f64;
                if best.map_or(true, |(bd, _, _)| dist < bd) {
                    best = Some((dist, e, st));
                }
            }
        }
        let (distance, e, st) = best.ok_or(Error::EmptyLibrary)?;
        let entry = &library.entries[e];
        let lib_basis = &entry.promp.basis;
        let matched_s = st as f64 * entry.track.length() / lib_kappa[e].len() as f64;
        matches.push(WindowMatch {
            center_s: center,
            entry: e,
            matched_s,
            distance,
        });

        // new-track basis indices inside the window, with their weight and
        // the corresponding library index
        let inside: Vec<(usize, f64, usize)> = (0..nb)
            .filter_map(|j| {
                let mut off = (basis.centers[j] - center).rem_euclid(length);
                if off > length / 2.0 {
                    off -= length;
                }
                (off.abs() < half).then(|| {
                    let s_lib = (matched_s + off).rem_euclid(lib_basis.length);
                    (j, 1.0 - off.abs() / half, lib_basis.nearest_index(s_lib))
                })
            })
            .collect();
        for &(j, wj, lj) in &inside {
            for &(k, wk, lk) in &inside {
                let w = wj * wk;
                acc[(j, k)] += w * lib_cov[e][(lj, lk)];
                weight[(j, k)] += w;
            }
        }
    }
    let mut sigma = acc.zip_map(&weight, |a, w| if w > 0.0 { a / w } else { 0.0 });
    symmetrize(&mut sigma);
    let (sigma, repaired) = repair_psd(&sigma);
    if repaired {
        log::debug!("transferred covariance repaired to PSD");
    }
    Ok((sigma, matches))
}

// ---------------------------------------------------------------------------
// Generalized line and sampling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneralizeConfig {
    pub mean_line: MeanLineConfig,
    pub transfer: TransferConfig,
    pub center_spacing: f64,
}

impl Default for GeneralizeConfig {
    fn default() -> Self {
        Self {
            mean_line: MeanLineConfig::default(),
            transfer: TransferConfig::default(),
            center_spacing: DEFAULT_CENTER_SPACING,
        }
    }
}

/// Zero-mean lateral distribution around a synthesized mean line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedLine {
    pub track_name: String,
    pub mean_line: Vec<Point>,
    pub mean_curvature_weights: Vec<f64>,
    /// One variable `dy` with zero mean weights.
    pub dy_promp: ProMp,
    pub matches: Vec<WindowMatch>,
    pub converged: bool,
    pub infeasible: Vec<usize>,
}

impl GeneralizedLine {
    /// The track re-expressed around the mean line, with widths measured
    /// from it. Sampled offsets are applied along its normals.
    pub fn frame(&self, track: &Track) -> Result<Track> {
        let offsets = track.lateral_offsets(&self.mean_line);
        let left = track.left_width.iter().zip(&offsets).map(|(w, d)| (w - d).max(0.0)).collect();
        let right = track.right_width.iter().zip(&offsets).map(|(w, d)| (w + d).max(0.0)).collect();
        let mut frame = Track::new(track.name.clone(), self.mean_line.clone(), left, right)?;
        frame.reference_kind = ReferenceKind::MeanLine;
        Ok(frame)
    }

    pub fn mean_kappa(&self) -> Vec<f64> {
        let phi = self.dy_promp.basis.phi();
        (phi * DVector::from_column_slice(&self.mean_curvature_weights))
            .iter()
            .copied()
            .collect()
    }
}

/// Mean line, curvature fit and transferred lateral covariance for a track
/// not in the library.
pub fn generalize(
    track: &Track,
    library: &DemonstrationLibrary,
    config: &GeneralizeConfig,
) -> Result<GeneralizedLine> {
    if library.entries.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let mean = build_mean_line(track, &config.mean_line)?;
    let basis = BasisConfig::for_track(track.length(), track.n_stations(), config.center_spacing)?;
    let projector = Projector::new(&basis)?;
    let kappa = Path::new(mean.points.clone())?.curvature;
    let kappa_w = projector.fit_variable(&kappa)?;
    let smooth: Vec<f64> = (projector.phi() * &kappa_w).iter().copied().collect();
    let (sigma, matches) = estimate_variance(&smooth, &basis, library, &config.transfer)?;
    let nb = basis.n_bf;
    let dy_promp = ProMp::new(basis, vec!["dy".into()], DVector::zeros(nb), sigma)?;
    Ok(GeneralizedLine {
        track_name: track.name.clone(),
        mean_line: mean.points,
        mean_curvature_weights: kappa_w.iter().copied().collect(),
        dy_promp,
        matches,
        converged: mean.converged,
        infeasible: mean.infeasible,
    })
}

/// A sampled candidate line and how much of it stays inside the borders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledLine {
    pub points: Vec<Point>,
    /// Share of arc length inside the borders, in [0, 1].
    pub inside_fraction: f64,
    pub exceeds_borders: bool,
}

/// Share of a station-aligned line's arc length inside the track borders.
pub fn inside_fraction(line: &[Point], track: &Track) -> f64 {
    let n = line.len();
    let inside: Vec<f64> = line
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let loc = track.locate(q, Some(i), 20);
            let st = loc.station;
            let ok = loc.lateral <= track.left_width[st] && loc.lateral >= -track.right_width[st];
            if ok {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut total = 0.0;
    let mut good = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        let len = crate::geometry::norm(crate::geometry::sub(line[j], line[i]));
        total += len;
        good += len * 0.5 * (inside[i] + inside[j]);
    }
    if total > 0.0 {
        good / total
    } else {
        0.0
    }
}

/// Draws lateral deviations around the mean line and maps them back to
/// Cartesian lines.
pub fn sample_lines(gen: &GeneralizedLine, track: &Track, count: usize, seed: u64) -> Result<Vec<SampledLine>> {
    let frame = gen.frame(track)?;
    let samples = gen.dy_promp.sample_many(count, seed)?;
    Ok(samples
        .into_iter()
        .map(|vars| {
            let points = frame.reference.offset(&vars[0]);
            let inside_fraction = inside_fraction(&points, track);
            SampledLine {
                exceeds_borders: inside_fraction < 1.0,
                points,
                inside_fraction,
            }
        })
        .collect())
}

/// Station-aligned `(x, y, Δt)` trajectory of a line driven at the
/// envelope's quasi-steady-state speed.
pub fn timed_trajectory(line: &[Point], env: &PerformanceEnvelope) -> Result<Vec<Vec<f64>>> {
    let path = Path::new(line.to_vec())?;
    let profile = speed_profile_on(&path, env);
    Ok(vec![
        line.iter().map(|p| p[0]).collect(),
        line.iter().map(|p| p[1]).collect(),
        profile.dt,
    ])
}

/// Prior over `(x, y, Δt)` for adaptation, fitted to timed sampled lines.
pub fn target_promp(
    lines: &[Vec<Point>],
    track: &Track,
    env: &PerformanceEnvelope,
    center_spacing: f64,
) -> Result<ProMp> {
    if lines.is_empty() {
        return Err(Error::EmptyInput("sampled lines"));
    }
    let basis = BasisConfig::for_track(track.length(), track.n_stations(), center_spacing)?;
    let demos = lines
        .iter()
        .map(|l| timed_trajectory(l, env))
        .collect::<Result<Vec<_>>>()?;
    ProMp::from_demonstrations(&basis, vec!["x".into(), "y".into(), "dt".into()], &demos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skyline_matches_dense_cholesky() {
        let n: usize = 9;
        let first: Vec<usize> = (0..n).map(|i| if i + 2 >= n { 0 } else { i.saturating_sub(2) }).collect();
        let mut sk = Skyline::new(first);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut put = |i: usize, j: usize, v: f64, sk: &mut Skyline| {
            sk.add(i, j, v);
            dense[(i, j)] += v;
            if i != j {
                dense[(j, i)] += v;
            }
        };
        for i in 0..n {
            put(i, i, 6.0 + i as f64 * 0.1, &mut sk);
            put((i + 1) % n, i, -1.5, &mut sk);
            put((i + 2) % n, i, 0.4, &mut sk);
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = sk.factor().unwrap().solve(&b);
        let oracle = dense.cholesky().unwrap().solve(&DVector::from_vec(b));
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() < 1e-12);
        }
    }
}
