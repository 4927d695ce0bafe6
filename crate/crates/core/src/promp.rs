//! Probabilistic movement primitives over track arc length.
//!
//! A trajectory of `n` variables sampled at `N_s` stations is projected onto
//! `N_BF` radial basis functions per variable. Weight vectors are stacked
//! variable by variable, so weight `v * N_BF + j` belongs to basis `j` of
//! variable `v`, and covariance blocks follow the same layout.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial basis over `[0, length)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub n_bf: usize,
    /// Width `h` of every basis function, in squared arc-length units.
    pub width: f64,
    pub centers: Vec<f64>,
    /// Ridge factor `ε`.
    pub ridge: f64,
    pub n_stations: usize,
    pub length: f64,
    /// Closed laps use circular distances between `s` and the centers.
    pub periodic: bool,
}

/// Default distance between basis centers (m).
pub const DEFAULT_CENTER_SPACING: f64 = 15.0;

impl BasisConfig {
    pub fn new(
        length: f64,
        n_stations: usize,
        n_bf: usize,
        width: f64,
        ridge: f64,
        periodic: bool,
    ) -> Result<Self> {
        if n_bf < 2 {
            return Err(Error::InvalidBasis("need at least 2 basis functions".into()));
        }
        let centers = if periodic {
            (0..n_bf).map(|j| j as f64 * length / n_bf as f64).collect()
        } else {
            (0..n_bf)
                .map(|j| j as f64 * length / (n_bf - 1) as f64)
                .collect()
        };
        let cfg = Self {
            n_bf,
            width,
            centers,
            ridge,
            n_stations,
            length,
            periodic,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Periodic basis with one center per `spacing` metres, `h = spacing²`
    /// and `ε = 1e-6 · trace(ΦᵀΦ) / N_BF`.
    pub fn for_track(length: f64, n_stations: usize, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidBasis("center spacing must be positive".into()));
        }
        let n_bf = ((length / spacing).round() as usize).max(2);
        let actual = length / n_bf as f64;
        let mut cfg = Self::new(length, n_stations, n_bf, actual * actual, 0.0, true)?;
        let phi = cfg.phi();
        let trace: f64 = phi.iter().map(|v| v * v).sum();
        cfg.ridge = 1e-6 * trace / n_bf as f64;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidBasis(m));
        if self.n_bf < 2 || self.centers.len() != self.n_bf {
            return bad(format!("{} centers for N_BF = {}", self.centers.len(), self.n_bf));
        }
        if !(self.width > 0.0) {
            return bad("width h must be positive".into());
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge factor must be non-negative".into());
        }
        if self.n_stations == 0 || !(self.length > 0.0) {
            return bad("need stations over a positive length".into());
        }
        let step = self.centers[1] - self.centers[0];
        if self
            .centers
            .windows(2)
            .any(|w| w[1] <= w[0] || ((w[1] - w[0]) - step).abs() > 1e-9 * self.length)
        {
            return bad("centers must be strictly increasing and equally spaced".into());
        }
        Ok(())
    }

    pub fn center_spacing(&self) -> f64 {
        self.centers[1] - self.centers[0]
    }

    /// Arc length of station `i`.
    pub fn station(&self, i: usize) -> f64 {
        i as f64 * self.length / self.n_stations as f64
    }

    fn distance(&self, s: f64, c: f64) -> f64 {
        let d = s - c;
        if self.periodic {
            let d = d.rem_euclid(self.length);
            d.min(self.length - d)
        } else {
            d
        }
    }

    /// Values `exp(-(s - c_j)² / (2h))` of all basis functions at `s`.
    pub fn eval(&self, s: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.n_bf,
            self.centers.iter().map(|&c| {
                let d = self.distance(s, c);
                (-d * d / (2.0 * self.width)).exp()
            }),
        )
    }

    /// Basis matrix `Φ_s` (`N_s × N_BF`) at the stations.
    pub fn phi(&self) -> DMatrix<f64> {
        let mut phi = DMatrix::zeros(self.n_stations, self.n_bf);
        for i in 0..self.n_stations {
            phi.set_row(i, &self.eval(self.station(i)).transpose());
        }
        phi
    }

    /// Index distance between two basis functions (circular when periodic).
    pub fn index_distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        if self.periodic {
            d.min(self.n_bf - d)
        } else {
            d
        }
    }

    /// Basis index whose center is closest to `s`.
    pub fn nearest_index(&self, s: f64) -> usize {
        (0..self.n_bf)
            .min_by(|&a, &b| {
                self.distance(s, self.centers[a])
                    .abs()
                    .total_cmp(&self.distance(s, self.centers[b]).abs())
            })
            .unwrap_or(0)
    }
}

/// Evaluates the basis at one arc length.
pub fn eval_basis(config: &BasisConfig, s: f64) -> Vec<f64> {
    config.eval(s).iter().copied().collect()
}

/// Ridge-regression projector `(ΦᵀΦ + εI)⁻¹ Φᵀ`, factored once.
///
/// `Ψ_s` is block-diagonal with identical blocks, so projecting each
/// variable separately is the same as the stacked system.
#[derive(Clone, Debug)]
pub struct Projector {
    pub basis: BasisConfig,
    phi: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Projector {
    pub fn new(basis: &BasisConfig) -> Result<Self> {
        basis.validate()?;
        let phi = basis.phi();
        let mut gram = phi.transpose() * &phi;
        for j in 0..basis.n_bf {
            gram[(j, j)] += basis.ridge;
        }
        let max_diag = gram.diagonal().max();
        let chol = gram.cholesky().ok_or(Error::SingularSystem)?;
        let l = chol.l_dirty();
        let min_pivot = (0..basis.n_bf).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
        if min_pivot <= 1e-13 * max_diag {
            return Err(Error::SingularSystem);
        }
        Ok(Self {
            basis: basis.clone(),
            phi,
            chol,
        })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// Weights of one variable sampled at the stations.
    pub fn fit_variable(&self, values: &[f64]) -> Result<DVector<f64>> {
        if values.len() != self.basis.n_stations {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for {} stations",
                values.len(),
                self.basis.n_stations
            )));
        }
        let tau = DVector::from_column_slice(values);
        Ok(self.chol.solve(&(self.phi.transpose() * tau)))
    }

    /// Stacked weight vector `w_i` of a multi-variable trajectory.
    pub fn fit(&self, variables: &[Vec<f64>]) -> Result<DVector<f64>> {
        let nb = self.basis.n_bf;
        let mut w = DVector::zeros(variables.len() * nb);
        for (v, values) in variables.iter().enumerate() {
            w.rows_mut(v * nb, nb).copy_from(&self.fit_variable(values)?);
        }
        Ok(w)
    }

    /// `Ψ_s w`, split per variable.
    pub fn reconstruct(&self, w: &DVector<f64>) -> Vec<Vec<f64>> {
        reconstruct_with(&self.phi, w, self.basis.n_bf)
    }
}

fn reconstruct_with(phi: &DMatrix<f64>, w: &DVector<f64>, n_bf: usize) -> Vec<Vec<f64>> {
    (0..w.len() / n_bf)
        .map(|v| (phi * w.rows(v * n_bf, n_bf)).iter().copied().collect())
        .collect()
}

/// Ridge regression of one trajectory onto the basis.
pub fn fit_weights(trajectory: &[Vec<f64>], config: &BasisConfig) -> Result<DVector<f64>> {
    Projector::new(config)?.fit(trajectory)
}

/// Sample mean and biased (`1/N`) covariance of weight vectors.
pub fn fit_distribution(weights: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let first = weights.first().ok_or(Error::EmptyInput("weight vectors"))?;
    let dim = first.len();
    if weights.iter().any(|w| w.len() != dim) {
        return Err(Error::DimensionMismatch("weight vectors differ in length".into()));
    }
    let count = weights.len() as f64;
    let mut mu = DVector::zeros(dim);
    for w in weights {
        mu += w;
    }
    mu /= count;
    let mut sigma = DMatrix::zeros(dim, dim);
    for w in weights {
        let d = w - &mu;
        sigma.ger(1.0 / count, &d, &d, 1.0);
    }
    Ok((mu, sigma))
}

/// Shape of the off-diagonal fade in the masking factor matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskShape {
    /// `½(1 + cos(π d / k))` for index distance `d < k`, zero beyond.
    #[default]
    RaisedCosine,
    /// One inside the band, zero outside.
    Binary,
}

/// Factor matrix `F_k` (`N_BF × N_BF`).
pub fn factor_matrix(basis: &BasisConfig, bandwidth: usize, shape: MaskShape) -> DMatrix<f64> {
    let k = bandwidth.max(1) as f64;
    DMatrix::from_fn(basis.n_bf, basis.n_bf, |i, j| {
        let d = basis.index_distance(i, j) as f64;
        if d >= k {
            0.0
        } else {
            match shape {
                MaskShape::RaisedCosine => 0.5 * (1.0 + (std::f64::consts::PI * d / k).cos()),
                MaskShape::Binary => 1.0,
            }
        }
    })
}

/// Multiplies every `N_BF × N_BF` block of a stacked covariance
/// element-wise by the same factor matrix.
pub fn mask_covariance(
    sigma: &DMatrix<f64>,
    basis: &BasisConfig,
    bandwidth: usize,
    shape: MaskShape,
) -> DMatrix<f64> {
    let f = factor_matrix(basis, bandwidth, shape);
    let nb = basis.n_bf;
    let mut out = sigma.clone();
    for (r, c) in (0..sigma.nrows()).flat_map(|r| (0..sigma.ncols()).map(move |c| (r, c))) {
        out[(r, c)] *= f[(r % nb, c % nb)];
    }
    symmetrize(&mut out);
    out
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Clips negative eigenvalues to zero. Returns the repaired matrix and
/// whether anything below `-tol · max|λ|` had to be clipped.
pub fn repair_psd(sigma: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let mut sym = sigma.clone();
    symmetrize(&mut sym);
    let eig = sym.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().all(|&l| l >= -tol) {
        return (sym, false);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    (out, true)
}

/// A conditioning target: values of some variables at arc length `s_prime`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub s_prime: f64,
    /// Indices of the observed variables.
    pub variables: Vec<usize>,
    pub y_star: Vec<f64>,
    pub sigma_y_star: DMatrix<f64>,
}

impl Observation {
    /// Observation of every variable of an `n`-variable ProMP.
    pub fn full(s_prime: f64, y_star: Vec<f64>, sigma_y_star: DMatrix<f64>) -> Self {
        Self {
            s_prime,
            variables: (0..y_star.len()).collect(),
            y_star,
            sigma_y_star,
        }
    }

    /// Observation of selected variables with independent standard deviations.
    pub fn diagonal(s_prime: f64, variables: Vec<usize>, y_star: Vec<f64>, std: &[f64]) -> Self {
        let var: Vec<f64> = std.iter().map(|s| s * s).collect();
        Self {
            s_prime,
            variables,
            y_star,
            sigma_y_star: DMatrix::from_diagonal(&DVector::from_vec(var)),
        }
    }

    /// The observation restricted to variables with finite variance; an
    /// infinitely uncertain value carries no information. `None` when no
    /// variable is left.
    pub fn informative(&self) -> Option<Self> {
        let keep: Vec<usize> = (0..self.variables.len())
            .filter(|&k| self.sigma_y_star.get((k, k)).is_some_and(|v| v.is_finite()))
            .collect();
        if keep.is_empty() {
            return None;
        }
        Some(Self {
            s_prime: self.s_prime,
            variables: keep.iter().map(|&k| self.variables[k]).collect(),
            y_star: keep.iter().map(|&k| self.y_star[k]).collect(),
            sigma_y_star: DMatrix::from_fn(keep.len(), keep.len(), |a, b| self.sigma_y_star[(keep[a], keep[b])]),
        })
    }

    pub fn validate(&self, n_vars: usize, length: f64) -> Result<()> {
        let m = self.variables.len();
        let bad = |s: String| Err(Error::InvalidObservation(s));
        if m == 0 || self.y_star.len() != m || self.sigma_y_star.shape() != (m, m) {
            return bad("observation dimensions disagree".into());
        }
        if self.variables.iter().any(|&v| v >= n_vars) {
            return bad(format!("variable index out of range for {n_vars} variables"));
        }
        if !(0.0..length).contains(&self.s_prime) {
            return bad(format!("s' = {} outside [0, {length})", self.s_prime));
        }
        let s = &self.sigma_y_star;
        if (s - s.transpose()).abs().max() > 1e-9 * s.abs().max().max(1.0) {
            return bad("observation covariance is not symmetric".into());
        }
        if s.clone().symmetric_eigen().eigenvalues.min() < -1e-12 * s.abs().max().max(1.0) {
            return bad("observation covariance is not positive semi-definite".into());
        }
        Ok(())
    }
}

/// Gaussian distribution over stacked basis weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ProMpFile", try_from = "ProMpFile")]
pub struct ProMp {
    pub basis: BasisConfig,
    pub variables: Vec<String>,
    pub mu_w: DVector<f64>,
    pub sigma_w: DMatrix<f64>,
}

/// On-disk layout: covariance as a list of rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ProMpFile {
    basis: BasisConfig,
    variables: Vec<String>,
    mu_w: Vec<f64>,
    sigma_w: Vec<Vec<f64>>,
}

impl From<ProMp> for ProMpFile {
    fn from(p: ProMp) -> Self {
        Self {
            sigma_w: p
                .sigma_w
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            mu_w: p.mu_w.iter().copied().collect(),
            basis: p.basis,
            variables: p.variables,
        }
    }
}

impl TryFrom<ProMpFile> for ProMp {
    type Error = Error;

    fn try_from(f: ProMpFile) -> Result<Self> {
        let dim = f.mu_w.len();
        if f.sigma_w.len() != dim || f.sigma_w.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("covariance rows do not match mean".into()));
        }
        let sigma = DMatrix::from_row_iterator(dim, dim, f.sigma_w.into_iter().flatten());
        ProMp::new(f.basis, f.variables, DVector::from_vec(f.mu_w), sigma)
    }
}

impl ProMp {
    pub fn new(
        basis: BasisConfig,
        variables: Vec<String>,
        mu_w: DVector<f64>,
        sigma_w: DMatrix<f64>,
    ) -> Result<Self> {
        basis.validate()?;
        let dim = variables.len() * basis.n_bf;
        if variables.is_empty() || mu_w.len() != dim || sigma_w.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim} weights for {} variables",
                variables.len()
            )));
        }
        let asym = (&sigma_w - sigma_w.transpose()).abs().max();
        if asym > 1e-9 * sigma_w.abs().max().max(1e-300) {
            return Err(Error::DimensionMismatch("covariance is not symmetric".into()));
        }
        Ok(Self {
            basis,
            variables,
            mu_w,
            sigma_w,
        })
    }

    /// Projects demonstrations (each a list of per-variable samples) and fits
    /// a Gaussian to their weights.
    pub fn from_demonstrations(
        basis: &BasisConfig,
        variables: Vec<String>,
        demos: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        let projector = Projector::new(basis)?;
        let weights = demos
            .iter()
            .map(|d| {
                if d.len() != variables.len() {
                    return Err(Error::DimensionMismatch("variables per demonstration".into()));
                }
                projector.fit(d)
            })
            .collect::<Result<Vec<_>>>()?;
        let (mu, sigma) = fit_distribution(&weights)?;
        Self::new(basis.clone(), variables, mu, sigma)
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Mean trajectory `Ψ_s μ_w`, per variable.
    pub fn mean_trajectory(&self) -> Vec<Vec<f64>> {
        reconstruct_with(&self.basis.phi(), &self.mu_w, self.basis.n_bf)
    }

    /// Trajectory for arbitrary weights.
    pub fn reconstruct(&self, w: &DVector<f64>) -> Vec<Vec<f64>> {
        reconstruct_with(&self.basis.phi(), w, self.basis.n_bf)
    }

    /// Marginal variance `diag(Φ Σ_vv Φᵀ)` of one variable at each station.
    pub fn station_variance(&self, var: usize) -> Vec<f64> {
        let nb = self.basis.n_bf;
        let phi = self.basis.phi();
        let block = self.sigma_w.view((var * nb, var * nb), (nb, nb));
        let tmp = &phi * block;
        (0..phi.nrows())
            .map(|i| tmp.row(i).dot(&phi.row(i)).max(0.0))
            .collect()
    }

    /// ProMP restricted to a subset of variables.
    pub fn marginal(&self, vars: &[usize]) -> Result<Self> {
        let nb = self.basis.n_bf;
        let idx: Vec<usize> = vars.iter().flat_map(|&v| (v * nb)..(v * nb + nb)).collect();
        let mu = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mu_w[i]));
        let sigma = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.sigma_w[(idx[r], idx[c])]);
        Self::new(
            self.basis.clone(),
            vars.iter().map(|&v| self.variables[v].clone()).collect(),
            mu,
            sigma,
        )
    }

    /// `Ψ_{s'}` restricted to the given variables (`nN_BF × m`).
    pub fn psi_at(&self, s: f64, vars: &[usize]) -> DMatrix<f64> {
        let nb = self.basis.n_bf;
        let b = self.basis.eval(s);
        let mut psi = DMatrix::zeros(self.mu_w.len(), vars.len());
        for (col, &v) in vars.iter().enumerate() {
            psi.view_mut((v * nb, col), (nb, 1)).copy_from(&b);
        }
        psi
    }

    /// Value of the mean trajectory of the given variables at `s`.
    pub fn mean_at(&self, s: f64, vars: &[usize]) -> Vec<f64> {
        (self.psi_at(s, vars).transpose() * &self.mu_w)
            .iter()
            .copied()
            .collect()
    }

    fn sampler(&self) -> Result<Option<DMatrix<f64>>> {
        if self.sigma_w.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        // jitter relative to the covariance scale, so rounding noise in a
        // near-zero covariance stays near zero
        let scale = self.sigma_w.amax();
        for rel in [0.0, 1e-12, 1e-10, 1e-8] {
            let jitter = rel * scale;
            let mut m = self.sigma_w.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = m.cholesky() {
                return Ok(Some(ch.unpack()));
            }
        }
        Err(Error::NotPsd)
    }

    /// `count` weight vectors `w* ~ N(μ_w, Σ_w)` from one seeded stream.
    pub fn sample_weights(&self, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let l = self.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.mu_w.len();
        Ok((0..count)
            .map(|_| match &l {
                None => self.mu_w.clone(),
                Some(l) => {
                    let z = DVector::from_iterator(
                        dim,
                        (0..dim).map(|_| StandardNormal.sample(&mut rng)),
                    );
                    &self.mu_w + l * z
                }
            })
            .collect())
    }

    /// Sampled trajectories `τ* = Ψ_s w*`.
    pub fn sample_many(&self, count: usize, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
        let phi = self.basis.phi();
        Ok(self
            .sample_weights(count, seed)?
            .iter()
            .map(|w| reconstruct_with(&phi, w, self.basis.n_bf))
            .collect())
    }

    pub fn sample(&self, seed: u64) -> Result<Vec<Vec<f64>>> {
        Ok(self.sample_many(1, seed)?.remove(0))
    }

    /// Gaussian conditioning on an observation. With `masked`, that
    /// covariance replaces `Σ_w` in the gain and in the covariance update,
    /// and the posterior is repaired to PSD if masking broke it.
    pub fn condition(&self, obs: &Observation, masked: Option<&DMatrix<f64>>) -> Result<Self> {
        if obs.variables.len() != obs.y_star.len() || obs.sigma_y_star.shape() != (obs.y_star.len(), obs.y_star.len()) {
            return Err(Error::InvalidObservation("observation dimensions disagree".into()));
        }
        let Some(obs) = obs.informative() else {
            return Ok(self.clone());
        };
        let obs = &obs;
        obs.validate(self.n_vars(), self.basis.length)?;
        let sigma = masked.unwrap_or(&self.sigma_w);
        if sigma.shape() != self.sigma_w.shape() {
            return Err(Error::DimensionMismatch("masked covariance shape".into()));
        }
        let psi = self.psi_at(obs.s_prime, &obs.variables);
        let sigma_psi = sigma * &psi;
        let innovation = &obs.sigma_y_star + psi.transpose() * &sigma_psi;
        if innovation.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularInnovation);
        }
        let inv = match innovation.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => innovation.try_inverse().ok_or(Error::SingularInnovation)?,
        };
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularInnovation);
        }
        let gain = &sigma_psi * inv;
        let y = DVector::from_column_slice(&obs.y_star);
        let mu = &self.mu_w + &gain * (y - psi.transpose() * &self.mu_w);
        let mut cov = sigma - &gain * sigma_psi.transpose();
        symmetrize(&mut cov);
        if masked.is_some() {
            let (fixed, repaired) = repair_psd(&cov);
            if repaired {
                warn!("masked conditioning produced a non-PSD covariance; clipped eigenvalues");
            }
            cov = fixed;
        }
        Ok(Self {
            basis: self.basis.clone(),
            variables: self.variables.clone(),
            mu_w: mu,
            sigma_w: cov,
        })
    }

    /// Masked copy of this ProMP's covariance.
    pub fn masked_covariance(&self, bandwidth: usize, shape: MaskShape) -> DMatrix<f64> {
        mask_covariance(&self.sigma_w, &self.basis, bandwidth, shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn basis(n_bf: usize, ridge: f64) -> BasisConfig {
        let spacing = 100.0 / n_bf as f64;
        BasisConfig::new(100.0, 200, n_bf, spacing * spacing, ridge, true).unwrap()
    }

    #[test]
    fn basis_is_one_at_center() {
        let b = basis(10, 0.0);
        let v = eval_basis(&b, b.centers[3]);
        assert_relative_eq!(v[3], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn basis_is_inverse_e_at_sqrt_2h() {
        let b = basis(10, 0.0);
        let v = eval_basis(&b, b.centers[4] + (2.0 * b.width).sqrt());
        assert_relative_eq!(v[4], (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(v[4], 0.36788, epsilon = 1e-5);
    }

    #[test]
    fn basis_is_symmetric_between_centers() {
        let b = basis(10, 0.0);
        let v = eval_basis(&b, 0.5 * (b.centers[2] + b.centers[3]));
        assert_relative_eq!(v[2], v[3], epsilon = 1e-15);
    }

    #[test]
    fn every_row_of_phi_is_covered() {
        let b = BasisConfig::for_track(1234.0, 500, 15.0).unwrap();
        let phi = b.phi();
        for i in 0..phi.nrows() {
            assert!(phi.row(i).sum() > 0.5);
            assert!(phi.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        // far tails underflow; within a few widths every value is positive
        let near = eval_basis(&b, b.centers[0] + 5.0 * b.width.sqrt());
        assert!(near[0] > 0.0);
    }

    #[test]
    fn invalid_basis_is_rejected() {
        assert!(BasisConfig::new(100.0, 50, 1, 1.0, 0.0, true).is_err());
        assert!(BasisConfig::new(100.0, 50, 5, 0.0, 0.0, true).is_err());
        assert!(BasisConfig::new(100.0, 50, 5, 1.0, -1.0, true).is_err());
    }

    #[test]
    fn exact_model_is_recovered() {
        let b = basis(12, 0.0);
        let phi = b.phi();
        let w_true = DVector::from_fn(12, |j, _| (j as f64 * 0.7).sin());
        let tau: Vec<f64> = (&phi * &w_true).iter().copied().collect();
        let w = fit_weights(&[tau], &b).unwrap();
        assert!((w - w_true).abs().max() < 1e-8);
    }

    #[test]
    fn zero_target_gives_zero_weights() {
        for ridge in [0.0, 1e-3, 10.0] {
            let w = fit_weights(&[vec![0.0; 200]], &basis(8, ridge)).unwrap();
            assert!(w.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rank_deficient_system_without_ridge_is_singular() {
        // more basis functions than stations
        let b = BasisConfig::new(100.0, 5, 20, 25.0, 0.0, true).unwrap();
        assert!(matches!(Projector::new(&b), Err(Error::SingularSystem)));
        let b = BasisConfig::new(100.0, 5, 20, 25.0, 1e-3, true).unwrap();
        assert!(Projector::new(&b).is_ok());
    }

    #[test]
    fn identical_vectors_have_zero_covariance() {
        let w = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let (mu, sigma) = fit_distribution(&[w.clone(), w.clone(), w.clone()]).unwrap();
        assert_eq!(mu, w);
        assert!(sigma.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn opposite_pair_gives_outer_product() {
        let w = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (mu, sigma) = fit_distribution(&[w.clone(), -w.clone()]).unwrap();
        assert!(mu.iter().all(|&v| v == 0.0));
        assert!((sigma - &w * w.transpose()).abs().max() < 1e-15);
    }

    #[test]
    fn empty_weights_are_rejected() {
        assert!(matches!(fit_distribution(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn zero_covariance_samples_the_mean() {
        let b = basis(6, 0.0);
        let mu = DVector::from_fn(6, |j, _| j as f64);
        let p = ProMp::new(b, vec!["dy".into()], mu, DMatrix::zeros(6, 6)).unwrap();
        assert_eq!(p.sample(3).unwrap(), p.mean_trajectory());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let b = basis(6, 0.0);
        let p = ProMp::new(b, vec!["dy".into()], DVector::zeros(6), DMatrix::identity(6, 6)).unwrap();
        assert_eq!(p.sample(11).unwrap(), p.sample(11).unwrap());
        assert_ne!(p.sample(11).unwrap(), p.sample(12).unwrap());
    }

    #[test]
    fn indefinite_covariance_cannot_be_sampled() {
        let b = basis(4, 0.0);
        let mut s = DMatrix::identity(4, 4);
        s[(0, 0)] = -1.0;
        let p = ProMp::new(b, vec!["dy".into()], DVector::zeros(4), s).unwrap();
        assert!(matches!(p.sample(0), Err(Error::NotPsd)));
    }

    #[test]
    fn serialization_round_trip_is_row_major() {
        let b = basis(3, 0.0);
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 3.0]);
        let p = ProMp::new(b, vec!["dy".into()], DVector::from_vec(vec![1.0, 2.0, 3.0]), s).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("[[2.0,0.5,0.0],[0.5,1.0,0.1],[0.0,0.1,3.0]]"));
        let back: ProMp = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    fn random_spd(dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1
    }

    #[test]
    fn exact_observation_pins_the_mean() {
        let b = basis(8, 0.0);
        let p = ProMp::new(b, vec!["x".into()], DVector::zeros(8), random_spd(8, 4)).unwrap();
        let obs = Observation::full(37.0, vec![2.5], DMatrix::identity(1, 1) * 1e-12);
        let post = p.condition(&obs, None).unwrap();
        assert!((post.mean_at(37.0, &[0])[0] - 2.5).abs() < 1e-6);
    }

    #[test]
    fn uninformative_observation_changes_nothing() {
        let b = basis(8, 0.0);
        let mu = DVector::from_fn(8, |j, _| j as f64 - 3.0);
        let p = ProMp::new(b, vec!["x".into()], mu, random_spd(8, 5)).unwrap();
        let obs = Observation::full(10.0, vec![100.0], DMatrix::identity(1, 1) * 1e12);
        let post = p.condition(&obs, None).unwrap();
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).abs().max() / b.abs().max();
        assert!((&post.mu_w - &p.mu_w).abs().max() / p.mu_w.abs().max() < 1e-6);
        assert!(rel(&post.sigma_w, &p.sigma_w) < 1e-6);
    }

    #[test]
    fn infinite_variance_drops_the_variable() {
        let b = basis(6, 0.0);
        let p = ProMp::new(b, vec!["x".into(), "y".into()], DVector::zeros(12), random_spd(12, 6)).unwrap();
        let blind = Observation::diagonal(20.0, vec![0], vec![5.0], &[f64::INFINITY]);
        assert_eq!(p.condition(&blind, None).unwrap(), p);
        let half = Observation::diagonal(20.0, vec![0, 1], vec![5.0, -1.0], &[f64::INFINITY, 0.3]);
        let only_y = Observation::diagonal(20.0, vec![1], vec![-1.0], &[0.3]);
        assert_eq!(p.condition(&half, None).unwrap(), p.condition(&only_y, None).unwrap());
    }

    #[test]
    fn singular_innovation_is_reported() {
        let b = basis(4, 0.0);
        let p = ProMp::new(b, vec!["x".into()], DVector::zeros(4), DMatrix::zeros(4, 4)).unwrap();
        let obs = Observation::full(10.0, vec![1.0], DMatrix::zeros(1, 1));
        assert!(matches!(p.condition(&obs, None), Err(Error::SingularInnovation)));
    }

    #[test]
    fn conditioning_leaves_prior_untouched() {
        let b = basis(5, 0.0);
        let p = ProMp::new(b, vec!["x".into()], DVector::zeros(5), random_spd(5, 9)).unwrap();
        let copy = p.clone();
        let _ = p
            .condition(&Observation::full(5.0, vec![1.0], DMatrix::identity(1, 1)), None)
            .unwrap();
        assert_eq!(p, copy);
    }

    #[test]
    fn observation_outside_track_is_rejected() {
        let b = basis(5, 0.0);
        let p = ProMp::new(b, vec!["x".into()], DVector::zeros(5), random_spd(5, 1)).unwrap();
        let obs = Observation::full(150.0, vec![1.0], DMatrix::identity(1, 1));
        assert!(matches!(p.condition(&obs, None), Err(Error::InvalidObservation(_))));
    }

    #[test]
    fn full_binary_mask_is_identity() {
        let b = basis(10, 0.0);
        let s = random_spd(20, 3);
        let m = mask_covariance(&s, &b, 10, MaskShape::Binary);
        assert!((m - &s).abs().max() < 1e-15);
    }

    #[test]
    fn unit_bandwidth_keeps_block_diagonals() {
        let b = basis(6, 0.0);
        let s = random_spd(12, 8);
        let m = mask_covariance(&s, &b, 1, MaskShape::RaisedCosine);
        for r in 0..12 {
            for c in 0..12 {
                if r % 6 == c % 6 {
                    assert_eq!(m[(r, c)], s[(r, c)]);
                } else {
                    assert_eq!(m[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn raised_cosine_fades_to_zero() {
        let b = basis(20, 0.0);
        let f = factor_matrix(&b, 4, MaskShape::RaisedCosine);
        assert_eq!(f[(0, 0)], 1.0);
        assert!(f[(0, 1)] < 1.0 && f[(0, 1)] > f[(0, 2)] && f[(0, 3)] > 0.0);
        assert_eq!(f[(0, 4)], 0.0);
        // circular distance on a closed lap
        assert_eq!(f[(0, 19)], f[(0, 1)]);
    }
}
