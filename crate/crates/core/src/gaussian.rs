//! Gaussian layer: per-class Gaussian fits, their Wasserstein barycenter and
//! the affine maps that push each class onto it.
//!
//! The barycenter covariance is the positive definite fixed point of
//! `Psi(C) = sum_j w_j (C^{1/2} C_j C^{1/2})^{1/2}`, found with the iteration
//! `C <- C^{-1/2} Psi(C)^2 C^{-1/2}` started from `sum_j w_j C_j`. The map for
//! class `j` is `x -> m_bary + A_j (x - m_j)` with `A_j C_j A_j = C_bary`.
//!
//! Only the plain sample estimator is provided. Sparse or robust covariance
//! estimators can be slotted in by producing a [`GaussianParams`] directly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, SampleMatrix, WeightVector};
use crate::error::{Error, Result};
use crate::map::InvertibleMap;

const SYMMETRY_TOL: f64 = 1e-10;

/// Mean and covariance of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        check_symmetric(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Configuration of a Gaussian layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianConfig {
    /// Ridge added to every class covariance.
    pub reg: f64,
    /// Relative Psi-residual at which the barycenter iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self { reg: 1e-6, tol: 1e-9, max_iter: 200 }
    }
}

/// Sample mean and maximum-likelihood covariance plus `reg * I`.
pub fn estimate_gaussian(samples: &SampleMatrix, reg: f64) -> GaussianParams {
    let (n, d) = (samples.n(), samples.d());
    let mut mean = DVector::zeros(d);
    for r in samples.rows() {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in samples.rows() {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
        cov[(a, a)] += reg;
    }
    GaussianParams { mean, cov }
}

fn check_symmetric(c: &DMatrix<f64>) -> Result<()> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch { expected: c.nrows(), got: c.ncols() });
    }
    let asym = (c - c.transpose()).norm();
    if asym > SYMMETRY_TOL * c.norm().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn symmetrize(c: &DMatrix<f64>) -> DMatrix<f64> {
    (c + c.transpose()) * 0.5
}

fn eigen(c: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    check_symmetric(c)?;
    Ok(SymmetricEigen::new(symmetrize(c)))
}

fn recompose(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = &eig.eigenvectors;
    let diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    symmetrize(&(v * diag * v.transpose()))
}

/// Symmetric PSD square root; negative eigenvalues are clipped to zero.
pub fn matrix_sqrt_psd(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = eigen(c)?;
    Ok(recompose(&eig, |l| l.max(0.0).sqrt()))
}

/// `(C^{1/2}, C^{-1/2})` for a positive definite `C`.
fn sqrt_and_inv_sqrt(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = eigen(c)?;
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::Singular(min));
    }
    Ok((recompose(&eig, f64::sqrt), recompose(&eig, |l| 1.0 / l.sqrt())))
}

/// `Psi(C) = sum_j w_j (C^{1/2} C_j C^{1/2})^{1/2}` given `C^{1/2}`.
fn psi(sqrt_c: &DMatrix<f64>, covs: &[&DMatrix<f64>], weights: &[f64]) -> Result<DMatrix<f64>> {
    let d = sqrt_c.nrows();
    let mut acc = DMatrix::zeros(d, d);
    for (cj, &w) in covs.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let inner = symmetrize(&(sqrt_c * *cj * sqrt_c));
        acc += matrix_sqrt_psd(&inner)? * w;
    }
    Ok(symmetrize(&acc))
}

/// Relative residual `||Psi(C) - C||_F / ||C||_F`.
pub fn barycenter_residual(c: &DMatrix<f64>, params: &[GaussianParams], weights: &WeightVector) -> Result<f64> {
    let sqrt_c = matrix_sqrt_psd(c)?;
    let covs: Vec<&DMatrix<f64>> = params.iter().map(|p| &p.cov).collect();
    let p = psi(&sqrt_c, &covs, weights.as_slice())?;
    Ok((&p - c).norm() / c.norm())
}

/// Wasserstein barycenter of Gaussians.
pub fn gaussian_barycenter(
    params: &[GaussianParams],
    weights: &WeightVector,
    tol: f64,
    max_iter: usize,
) -> Result<GaussianParams> {
    let first = params.first().ok_or_else(|| Error::invalid("no Gaussian components"))?;
    weights.check_len(params.len())?;
    let d = first.dim();
    for p in params {
        if p.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
        }
    }
    if params.iter().all(|p| p == first) {
        return Ok(first.clone());
    }
    let w = weights.as_slice();
    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    for (p, &wj) in params.iter().zip(w) {
        mean += &p.mean * wj;
        cov += &p.cov * wj;
    }
    let covs: Vec<&DMatrix<f64>> = params.iter().map(|p| &p.cov).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iter {
        let (sqrt_c, inv_sqrt_c) = sqrt_and_inv_sqrt(&cov)?;
        let p = psi(&sqrt_c, &covs, w)?;
        residual = (&p - &cov).norm() / cov.norm();
        if residual < tol {
            return Ok(GaussianParams { mean, cov });
        }
        cov = symmetrize(&(&inv_sqrt_c * &p * &p * &inv_sqrt_c));
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// Affine map `x -> m_bary + A (x - m_j)` with `A` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    mean: DVector<f64>,
    a: DMatrix<f64>,
    bary_mean: DVector<f64>,
    a_inv: DMatrix<f64>,
}

impl AffineMap {
    pub fn new(mean: DVector<f64>, a: DMatrix<f64>, bary_mean: DVector<f64>) -> Result<Self> {
        let d = mean.len();
        if a.nrows() != d || a.ncols() != d || bary_mean.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a.nrows() });
        }
        let a_inv = if a == DMatrix::identity(d, d) {
            a.clone()
        } else {
            let eig = eigen(&a)?;
            let min = eig.eigenvalues.min();
            if !(min > 0.0) {
                return Err(Error::Singular(min));
            }
            recompose(&eig, |l| 1.0 / l)
        };
        Ok(Self { mean, a, bary_mean, a_inv })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn class_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn bary_mean(&self) -> &DVector<f64> {
        &self.bary_mean
    }

    pub fn is_identity(&self) -> bool {
        let d = self.mean.len();
        self.mean == self.bary_mean && self.a == DMatrix::identity(d, d)
    }

    /// Image of a Gaussian under the map: `(m_bary + A(m - m_j), A C A)`.
    pub fn push_params(&self, p: &GaussianParams) -> GaussianParams {
        GaussianParams {
            mean: &self.bary_mean + &self.a * (&p.mean - &self.mean),
            cov: symmetrize(&(&self.a * &p.cov * &self.a)),
        }
    }
}

impl InvertibleMap for AffineMap {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.mean.len();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.a[(i, j)] * (x[j] - self.mean[j]);
            }
            out[i] = self.bary_mean[i] + s;
        }
    }

    fn inverse_into(&self, z: &[f64], out: &mut [f64]) {
        let d = self.mean.len();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.a_inv[(i, j)] * (z[j] - self.bary_mean[j]);
            }
            out[i] = self.mean[i] + s;
        }
    }
}

/// The optimal map from `class` to `bary`:
/// `A = C_j^{-1/2} (C_j^{1/2} C_bary C_j^{1/2})^{1/2} C_j^{-1/2}`, so that `A C_j A = C_bary`.
pub fn gaussian_monge_map(class: &GaussianParams, bary: &GaussianParams) -> Result<AffineMap> {
    let d = class.dim();
    if bary.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: bary.dim() });
    }
    let bary_min = eigen(&bary.cov)?.eigenvalues.min();
    if !(bary_min > 0.0) {
        return Err(Error::Singular(bary_min));
    }
    let a = if class.cov == bary.cov {
        DMatrix::identity(d, d)
    } else {
        let (s, s_inv) = sqrt_and_inv_sqrt(&class.cov)?;
        let middle = matrix_sqrt_psd(&symmetrize(&(&s * &bary.cov * &s)))?;
        symmetrize(&(&s_inv * middle * &s_inv))
    };
    AffineMap::new(class.mean.clone(), a, bary.mean.clone())
}

/// A fitted Gaussian layer: one affine map per class.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLayer {
    pub maps: Vec<AffineMap>,
}

pub fn fit_gaussian_layer(
    dataset: &LabeledDataset,
    weights: &WeightVector,
    cfg: &GaussianConfig,
) -> Result<GaussianLayer> {
    weights.check_len(dataset.k())?;
    let params: Vec<GaussianParams> =
        dataset.classes().iter().map(|c| estimate_gaussian(c, cfg.reg)).collect();
    let bary = gaussian_barycenter(&params, weights, cfg.tol, cfg.max_iter)?;
    let maps = params
        .iter()
        .map(|p| gaussian_monge_map(p, &bary))
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianLayer { maps })
}

#[derive(Serialize, Deserialize)]
pub(crate) struct AffineMapRecord {
    pub m_j: Vec<f64>,
    /// Row-major.
    pub a: Vec<Vec<f64>>,
    pub m_bary: Vec<f64>,
}

impl From<&AffineMap> for AffineMapRecord {
    fn from(m: &AffineMap) -> Self {
        let d = m.mean.len();
        Self {
            m_j: m.mean.iter().copied().collect(),
            a: (0..d).map(|i| (0..d).map(|j| m.a[(i, j)]).collect()).collect(),
            m_bary: m.bary_mean.iter().copied().collect(),
        }
    }
}

impl TryFrom<AffineMapRecord> for AffineMap {
    type Error = Error;
    fn try_from(r: AffineMapRecord) -> Result<Self> {
        let d = r.m_j.len();
        if r.a.len() != d || r.a.iter().any(|row| row.len() != d) {
            return Err(Error::invalid("affine matrix shape does not match mean"));
        }
        let a = DMatrix::from_fn(d, d, |i, j| r.a[i][j]);
        AffineMap::new(DVector::from_vec(r.m_j), a, DVector::from_vec(r.m_bary))
    }
}
