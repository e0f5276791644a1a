//! Independent-components layer.
//!
//! Classes are modelled as products of 1D densities along the columns of a
//! shared orthonormal frame `Q` (`d x m`). Each direction gets its own 1D
//! barycenter map and the layer acts as
//! `x -> x + Q (t(Q^T x) - Q^T x)`, leaving the orthogonal complement of
//! `span(Q)` untouched. The frame is the identity, a random rotation, or the
//! maximiser of the multi-class sliced discrepancy
//!
//! ```text
//! J(Q) = ( sum_j w_j/m sum_l 1/n sum_i |(X_j q_l)_[i] - Y_[i],l|^p )^(1/p),
//! Y_[i],l = sum_j w_j (X_j q_l)_[i]
//! ```
//!
//! (`_[i]` is the i-th order statistic) found by projected gradient ascent on
//! the Stiefel manifold with backtracking.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, SampleMatrix, WeightVector};
use crate::error::{Error, Result};
use crate::map::InvertibleMap;
use crate::rng::{stream_rng, Stream};
use crate::univariate::{barycenter_quantile, fit_univariate_density, DensityConfig, QuantileFunction, UnivariateDensity};

/// Orthonormality tolerance of every frame handed out by this module.
pub const ORTHO_TOL: f64 = 1e-10;

/// `d x m` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoFrame {
    q: DMatrix<f64>,
}

impl OrthoFrame {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        let (d, m) = q.shape();
        if m == 0 || m > d {
            return Err(Error::invalid(format!("frame must have 1 <= m <= d, got {d}x{m}")));
        }
        let f = Self { q };
        let err = f.orthonormality_error();
        if !(err < ORTHO_TOL) {
            return Err(Error::invalid(format!("frame columns are not orthonormal (error {err:e})")));
        }
        Ok(f)
    }

    /// The first `m` standard basis vectors.
    pub fn identity(d: usize, m: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, m))
    }

    pub fn d(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.q.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        self.q.column(l).iter().copied().collect()
    }

    /// `||Q^T Q - I||_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.q.ncols();
        (self.q.transpose() * &self.q - DMatrix::<f64>::identity(m, m)).norm()
    }

    fn project(&self, x: &[f64], z: &mut [f64]) {
        for (l, zl) in z.iter_mut().enumerate() {
            *zl = self.q.column(l).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Random frame from the QR factorisation of a Gaussian matrix, with the
/// column signs fixed so that `R` has a positive diagonal.
pub fn random_frame_from_rng<R: Rng>(d: usize, m: usize, rng: &mut R) -> Result<OrthoFrame> {
    if m == 0 || m > d {
        return Err(Error::invalid(format!("frame must have 1 <= m <= d, got {d}x{m}")));
    }
    let g = DMatrix::from_fn(d, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for l in 0..m {
        if r[(l, l)] < 0.0 {
            q.column_mut(l).neg_mut();
        }
    }
    OrthoFrame::new(q)
}

pub fn random_frame(d: usize, m: usize, seed: u64) -> Result<OrthoFrame> {
    random_frame_from_rng(d, m, &mut stream_rng(seed, Stream::FrameInit, 0))
}

/// Closest matrix with orthonormal columns (the polar factor `U V^T`).
fn polar(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = mat.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let q = u * v_t;
    // one Newton–Schulz style correction pass for rank-deficient corner cases
    let m = q.ncols();
    let err = (q.transpose() * &q - DMatrix::<f64>::identity(m, m)).norm();
    if err < 1e-13 {
        q
    } else {
        let qr = q.qr();
        let r = qr.r();
        let mut q = qr.q();
        for l in 0..m {
            if r[(l, l)] < 0.0 {
                q.column_mut(l).neg_mut();
            }
        }
        q
    }
}

/// Settings of the frame optimiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MswdConfig {
    pub p: f64,
    pub max_iter: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    /// Relative objective improvement below which the optimiser stops.
    pub tol: f64,
}

impl Default for MswdConfig {
    fn default() -> Self {
        Self { p: 2.0, max_iter: 50, initial_step: 1.0, shrink: 0.5, max_halvings: 20, tol: 1e-6 }
    }
}

impl MswdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !(self.initial_step > 0.0) || !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.tol >= 0.0)
        {
            return Err(Error::invalid("mSWD config needs p >= 1, positive step, shrink in (0, 1), tol >= 0"));
        }
        Ok(())
    }
}

/// Subsamples every class (without replacement) to the smallest class size.
pub fn equalize(dataset: &LabeledDataset, seed: u64, index: u64) -> Result<LabeledDataset> {
    let n_min = dataset.classes().iter().map(SampleMatrix::n).min().unwrap_or(0);
    if dataset.classes().iter().all(|c| c.n() == n_min) {
        return Ok(dataset.clone());
    }
    let mut rng = stream_rng(seed, Stream::Subsample, index);
    let classes = dataset
        .classes()
        .iter()
        .map(|c| {
            if c.n() == n_min {
                return Ok(c.clone());
            }
            let mut idx = sample(&mut rng, c.n(), n_min).into_vec();
            idx.sort_unstable();
            c.select_rows(&idx)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(classes)
}

fn common_n(dataset: &LabeledDataset) -> Result<usize> {
    let n = dataset.class(0).n();
    if let Some(c) = dataset.classes().iter().find(|c| c.n() != n) {
        return Err(Error::invalid(format!(
            "mSWD needs equal class sizes, got {n} and {}; equalize first",
            c.n()
        )));
    }
    Ok(n)
}

/// Sorted projections `(values, permutation)` per class along one direction.
fn sorted_projections(dataset: &LabeledDataset, q: &[f64]) -> Vec<(Vec<f64>, Vec<usize>)> {
    dataset
        .classes()
        .iter()
        .map(|c| {
            let proj = c.project(q);
            let mut perm: Vec<usize> = (0..proj.len()).collect();
            perm.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));
            (perm.iter().map(|&i| proj[i]).collect(), perm)
        })
        .collect()
}

/// Inner sum `S` of the objective and, optionally, `dS/dQ`.
fn mswd_sum(
    dataset: &LabeledDataset,
    frame: &DMatrix<f64>,
    weights: &[f64],
    p: f64,
    with_grad: bool,
) -> Result<(f64, Option<DMatrix<f64>>)> {
    let n = common_n(dataset)?;
    let (d, m) = frame.shape();
    if dataset.d() != d {
        return Err(Error::DimensionMismatch { expected: d, got: dataset.d() });
    }
    let k = dataset.k();
    let mut total = 0.0;
    let mut grad = with_grad.then(|| DMatrix::zeros(d, m));
    let mut coef = vec![0.0; k];
    for l in 0..m {
        let q: Vec<f64> = frame.column(l).iter().copied().collect();
        let sorted = sorted_projections(dataset, &q);
        for i in 0..n {
            let y: f64 = sorted.iter().zip(weights).map(|((v, _), w)| w * v[i]).sum();
            let mut coef_sum = 0.0;
            for j in 0..k {
                let r = sorted[j].0[i] - y;
                let scale = weights[j] / (m as f64 * n as f64);
                total += scale * r.abs().powf(p);
                if grad.is_some() {
                    let c = if r == 0.0 { 0.0 } else { scale * p * r.abs().powf(p - 1.0) * r.signum() };
                    coef[j] = c;
                    coef_sum += c;
                }
            }
            if let Some(g) = grad.as_mut() {
                for j in 0..k {
                    let c = coef[j] - weights[j] * coef_sum;
                    if c == 0.0 {
                        continue;
                    }
                    let row = dataset.class(j).row(sorted[j].1[i]);
                    for (a, x) in row.iter().enumerate() {
                        g[(a, l)] += c * x;
                    }
                }
            }
        }
    }
    Ok((total, grad))
}

/// The multi-class sliced discrepancy `J(Q)`. Classes must have equal sizes.
pub fn mswd_objective(dataset: &LabeledDataset, frame: &OrthoFrame, weights: &WeightVector, p: f64) -> Result<f64> {
    weights.check_len(dataset.k())?;
    mswd_objective_raw(dataset, frame.matrix(), weights, p)
}

/// [`mswd_objective`] for an arbitrary (not necessarily orthonormal) `d x m` matrix.
pub fn mswd_objective_raw(dataset: &LabeledDataset, q: &DMatrix<f64>, weights: &WeightVector, p: f64) -> Result<f64> {
    let (s, _) = mswd_sum(dataset, q, weights.as_slice(), p, false)?;
    Ok(s.max(0.0).powf(1.0 / p))
}

/// Euclidean gradient of `J` with respect to the entries of `Q`, holding the
/// sort permutations fixed. Zero where the objective is zero.
pub fn mswd_gradient(dataset: &LabeledDataset, q: &DMatrix<f64>, weights: &WeightVector, p: f64) -> Result<DMatrix<f64>> {
    weights.check_len(dataset.k())?;
    let (s, g) = mswd_sum(dataset, q, weights.as_slice(), p, true)?;
    let g = g.expect("gradient requested");
    if s <= 0.0 {
        return Ok(DMatrix::zeros(q.nrows(), q.ncols()));
    }
    Ok(g * (s.powf(1.0 / p - 1.0) / p))
}

/// One accepted optimiser iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MswdIterate {
    pub objective: f64,
    pub orthonormality_error: f64,
}

/// Maximises [`mswd_objective`] over frames, starting from `init`.
///
/// Returns the best frame and the accepted iterates (the first entry is the
/// initial frame). Stops after `max_iter` iterations, when no backtracking
/// step improves the objective, or when the relative improvement drops
/// below `tol`.
pub fn optimize_mswd_frame(
    dataset: &LabeledDataset,
    weights: &WeightVector,
    init: OrthoFrame,
    cfg: &MswdConfig,
) -> Result<(OrthoFrame, Vec<MswdIterate>)> {
    cfg.validate()?;
    let mut q = init.q;
    let mut value = mswd_objective_raw(dataset, &q, weights, cfg.p)?;
    let ortho = |q: &DMatrix<f64>| {
        let m = q.ncols();
        (q.transpose() * q - DMatrix::<f64>::identity(m, m)).norm()
    };
    let mut trace = vec![MswdIterate { objective: value, orthonormality_error: ortho(&q) }];
    for _ in 0..cfg.max_iter {
        let g = mswd_gradient(dataset, &q, weights, cfg.p)?;
        if g.norm() == 0.0 {
            break;
        }
        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let cand = polar(&(&q + &g * step));
            let v = mswd_objective_raw(dataset, &cand, weights, cfg.p)?;
            if v > value {
                accepted = Some((cand, v));
                break;
            }
            step *= cfg.shrink;
        }
        let Some((cand, v)) = accepted else { break };
        let rel = (v - value) / value.abs().max(f64::MIN_POSITIVE);
        q = cand;
        value = v;
        trace.push(MswdIterate { objective: value, orthonormality_error: ortho(&q) });
        if rel < cfg.tol {
            break;
        }
    }
    Ok((OrthoFrame::new(q)?, trace))
}

/// Frame maximising the sliced discrepancy, initialised with [`random_frame`]`(d, m, seed)`.
/// Unequal classes are subsampled to a common size first.
pub fn find_mswd_frame(
    dataset: &LabeledDataset,
    weights: &WeightVector,
    m: usize,
    cfg: &MswdConfig,
    seed: u64,
) -> Result<OrthoFrame> {
    let eq = equalize(dataset, seed, 0)?;
    let init = random_frame(dataset.d(), m, seed)?;
    Ok(optimize_mswd_frame(&eq, weights, init, cfg)?.0)
}

/// How a layer picks its frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSource {
    Mswd,
    Random,
    Identity,
}

impl std::str::FromStr for FrameSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mswd" => Ok(Self::Mswd),
            "random" => Ok(Self::Random),
            "identity" => Ok(Self::Identity),
            other => Err(Error::invalid(format!("unknown frame source `{other}`"))),
        }
    }
}

/// Configuration of an independent-components layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NbConfig {
    pub frame: FrameSource,
    /// Number of directions; `None` means all `d`.
    pub m: Option<usize>,
    pub density: DensityConfig,
    pub mswd: MswdConfig,
}

impl Default for NbConfig {
    fn default() -> Self {
        Self { frame: FrameSource::Mswd, m: None, density: DensityConfig::default(), mswd: MswdConfig::default() }
    }
}

/// Per-class densities along one direction and their barycenter quantile.
/// `bary` is `None` when all classes share the same density, in which case
/// every class map is the identity along this direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionMaps {
    pub densities: Vec<UnivariateDensity>,
    pub bary: Option<QuantileFunction>,
}

impl DirectionMaps {
    pub fn fit(projections: &[Vec<f64>], weights: &WeightVector, cfg: &DensityConfig) -> Result<Self> {
        let densities = projections
            .iter()
            .map(|p| fit_univariate_density(p, cfg))
            .collect::<Result<Vec<_>>>()?;
        let bary = if densities.iter().all(|d| d == &densities[0]) {
            None
        } else {
            Some(barycenter_quantile(&densities, weights)?)
        };
        Ok(Self { densities, bary })
    }

    pub fn forward(&self, class: usize, x: f64) -> f64 {
        match &self.bary {
            None => x,
            Some(q) => q.eval_level(self.densities[class].cdf_level(x)),
        }
    }

    pub fn inverse(&self, class: usize, z: f64) -> f64 {
        match &self.bary {
            None => z,
            Some(q) => self.densities[class].quantile_level(q.cdf_level(z)),
        }
    }
}

/// A fitted independent-components layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NbLayer {
    pub frame: OrthoFrame,
    pub frame_source: FrameSource,
    pub seed: u64,
    pub directions: Vec<DirectionMaps>,
}

impl NbLayer {
    pub fn k(&self) -> usize {
        self.directions.first().map_or(0, |d| d.densities.len())
    }

    pub fn class_map(&self, class: usize) -> NbLayerMap<'_> {
        NbLayerMap { layer: self, class }
    }

    pub fn is_identity(&self) -> bool {
        self.directions.iter().all(|d| d.bary.is_none())
    }
}

/// Class `j`'s map of an [`NbLayer`].
#[derive(Debug, Clone, Copy)]
pub struct NbLayerMap<'a> {
    layer: &'a NbLayer,
    class: usize,
}

impl NbLayerMap<'_> {
    fn apply(&self, x: &[f64], out: &mut [f64], f: impl Fn(&DirectionMaps, usize, f64) -> f64) {
        let frame = &self.layer.frame;
        let m = frame.m();
        let mut z = vec![0.0; m];
        frame.project(x, &mut z);
        out.copy_from_slice(x);
        for (l, dir) in self.layer.directions.iter().enumerate() {
            let delta = f(dir, self.class, z[l]) - z[l];
            if delta == 0.0 {
                continue;
            }
            for (o, qa) in out.iter_mut().zip(frame.q.column(l).iter()) {
                *o += qa * delta;
            }
        }
    }
}

impl InvertibleMap for NbLayerMap<'_> {
    fn dim(&self) -> usize {
        self.layer.frame.d()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out, DirectionMaps::forward);
    }

    fn inverse_into(&self, z: &[f64], out: &mut [f64]) {
        self.apply(z, out, DirectionMaps::inverse);
    }
}

/// Fits frame and per-direction maps. `seed` and `index` select the random
/// streams for frame initialisation and subsampling.
pub fn fit_nb_layer(
    dataset: &LabeledDataset,
    weights: &WeightVector,
    cfg: &NbConfig,
    seed: u64,
    index: u64,
) -> Result<NbLayer> {
    weights.check_len(dataset.k())?;
    let d = dataset.d();
    let m = cfg.m.unwrap_or(d);
    if m == 0 || m > d {
        return Err(Error::invalid(format!("number of directions must be in 1..={d}, got {m}")));
    }
    let frame = match cfg.frame {
        FrameSource::Identity => OrthoFrame::identity(d, m)?,
        FrameSource::Random => random_frame_from_rng(d, m, &mut stream_rng(seed, Stream::FrameInit, index))?,
        FrameSource::Mswd => {
            let eq = equalize(dataset, seed, index)?;
            let init = random_frame_from_rng(d, m, &mut stream_rng(seed, Stream::FrameInit, index))?;
            optimize_mswd_frame(&eq, weights, init, &cfg.mswd)?.0
        }
    };
    let directions = (0..m)
        .map(|l| {
            let q = frame.column(l);
            let proj: Vec<Vec<f64>> = dataset.classes().iter().map(|c| c.project(&q)).collect();
            DirectionMaps::fit(&proj, weights, &cfg.density)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NbLayer { frame, frame_source: cfg.frame, seed, directions })
}

#[derive(Serialize, Deserialize)]
pub(crate) struct NbRecord {
    pub d: usize,
    pub m: usize,
    /// Column-major `d x m`.
    pub q: Vec<f64>,
    pub frame_source: FrameSource,
    pub seed: u64,
    pub directions: Vec<DirectionMaps>,
}

impl From<&NbLayer> for NbRecord {
    fn from(l: &NbLayer) -> Self {
        Self {
            d: l.frame.d(),
            m: l.frame.m(),
            q: l.frame.q.as_slice().to_vec(),
            frame_source: l.frame_source,
            seed: l.seed,
            directions: l.directions.clone(),
        }
    }
}

impl TryFrom<NbRecord> for NbLayer {
    type Error = Error;
    fn try_from(r: NbRecord) -> Result<Self> {
        if r.q.len() != r.d * r.m || r.directions.len() != r.m {
            return Err(Error::invalid("nb layer frame shape does not match its directions"));
        }
        let frame = OrthoFrame::new(DMatrix::from_column_slice(r.d, r.m, &r.q))?;
        let k = r.directions.first().map_or(0, |d| d.densities.len());
        if r.directions.iter().any(|d| d.densities.len() != k) {
            return Err(Error::invalid("nb layer directions disagree on the number of classes"));
        }
        Ok(NbLayer { frame, frame_source: r.frame_source, seed: r.seed, directions: r.directions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(a: &[f64], b: &[f64]) -> LabeledDataset {
        LabeledDataset::new(vec![
            SampleMatrix::from_column(a, 0).unwrap(),
            SampleMatrix::from_column(b, 1).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn objective_hand_examples() {
        let data = ds(&[0.0, 1.0], &[2.0, 3.0]);
        let f = OrthoFrame::identity(1, 1).unwrap();
        let w = WeightVector::uniform(2);
        assert!((mswd_objective(&data, &f, &w, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((mswd_objective(&data, &f, &w, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let same = ds(&[0.0, 1.0], &[1.0, 0.0]);
        assert_eq!(mswd_objective(&same, &f, &w, 2.0).unwrap(), 0.0);
        assert_eq!(mswd_gradient(&same, f.matrix(), &w, 2.0).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn objective_requires_equal_sizes() {
        let data = ds(&[0.0, 1.0, 2.0], &[2.0, 3.0]);
        let f = OrthoFrame::identity(1, 1).unwrap();
        assert!(mswd_objective(&data, &f, &WeightVector::uniform(2), 2.0).is_err());
        let eq = equalize(&data, 0, 0).unwrap();
        assert_eq!(eq.class(0).n(), 2);
    }

    #[test]
    fn random_frames() {
        let f = random_frame(5, 3, 11).unwrap();
        assert!(f.orthonormality_error() < 1e-12);
        assert_eq!(f, random_frame(5, 3, 11).unwrap());
        let one = random_frame(1, 1, 3).unwrap();
        assert_eq!(one.matrix()[(0, 0)].abs(), 1.0);
        assert!(random_frame(2, 3, 0).is_err());
    }

    #[test]
    fn frame_source_parse() {
        assert_eq!("mswd".parse::<FrameSource>().unwrap(), FrameSource::Mswd);
        assert!("qr".parse::<FrameSource>().is_err());
    }
}
