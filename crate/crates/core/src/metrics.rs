//! Evaluation: transportation cost, Sinkhorn distances and per-layer traces.
//!
//! The Sinkhorn distance uses uniform weights on both samples and the squared
//! Euclidean cost. Iterations run in the log domain and the reported value
//! is the cost `<P, C>` of the regularised plan, without the entropy term
//! and without debiasing.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, SampleMatrix, WeightVector};
use crate::error::{Error, Result};
use crate::flow::{fit_flow_with, FlowModel, LayerConfig};
use crate::gaussian::{matrix_sqrt_psd, GaussianParams};

/// Marginal residual at which Sinkhorn stops early.
pub const SINKHORN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    pub eps: f64,
    pub max_iter: usize,
    /// When set, runs warm-started stages with `eps` halved from this value
    /// down to `eps`. All stages count against `max_iter`.
    pub eps_start: Option<f64>,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { eps: 0.1, max_iter: 100, eps_start: None }
    }
}

impl SinkhornConfig {
    pub fn new(eps: f64, max_iter: usize) -> Self {
        Self { eps, max_iter, ..Self::default() }
    }

    fn schedule(&self) -> Vec<f64> {
        let mut stages = Vec::new();
        if let Some(mut e) = self.eps_start {
            while e > self.eps {
                stages.push(e);
                e *= 0.5;
            }
        }
        stages.push(self.eps);
        stages
    }
}

/// Largest plan (in entries) for which the final stage uses a dense kernel.
const DENSE_MAX_ENTRIES: usize = 1 << 22;
/// Residual below which the final stage leaves the log domain.
const DENSE_SWITCH: f64 = 1e-3;
const DENSE_MIN_ITER: usize = 100;
/// Scalings outside `[1 / SCALE_LIMIT, SCALE_LIMIT]` are folded back into the potentials.
const SCALE_LIMIT: f64 = 1e50;

/// Column residual at which an intermediate annealing stage ends.
const STAGE_TOL: f64 = 1e-4;
const STAGE_MAX_ITER: usize = 200;

/// Dense `n x m` coupling, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub n: usize,
    pub m: usize,
    pub p: Vec<f64>,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.p.chunks(self.m).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.m];
        for r in self.p.chunks(self.m) {
            for (a, b) in s.iter_mut().zip(r) {
                *a += b;
            }
        }
        s
    }

    /// Largest deviation of a row or column sum from its uniform target.
    pub fn marginal_error(&self) -> f64 {
        let (a, b) = (1.0 / self.n as f64, 1.0 / self.m as f64);
        let rows = self.row_sums().into_iter().map(|s| (s - a).abs());
        let cols = self.col_sums().into_iter().map(|s| (s - b).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Outcome of a Sinkhorn run.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    pub cost: f64,
    pub iterations: usize,
    /// L1 column-marginal residual of the last iteration.
    pub residual: f64,
    pub plan: Option<TransportPlan>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log sum exp` of the values produced by `f(0..len)`.
fn log_sum_exp(len: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut mx = f64::NEG_INFINITY;
    for i in 0..len {
        mx = mx.max(f(i));
    }
    if !mx.is_finite() {
        return mx;
    }
    let s: f64 = (0..len).map(|i| (f(i) - mx).exp()).sum();
    mx + s.ln()
}

/// Runs log-domain Sinkhorn between the empirical measures of `x` and `y`.
pub fn sinkhorn(x: &SampleMatrix, y: &SampleMatrix, cfg: &SinkhornConfig, keep_plan: bool) -> Result<SinkhornResult> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch { expected: x.d(), got: y.d() });
    }
    if !(cfg.eps > 0.0) || !cfg.eps.is_finite() || cfg.eps_start.is_some_and(|e| !(e.is_finite() && e > 0.0)) {
        return Err(Error::invalid(format!("Sinkhorn eps must be positive, got {}", cfg.eps)));
    }
    let (n, m) = (x.n(), y.n());
    let (log_a, log_b) = (-(n as f64).ln(), -(m as f64).ln());
    let xs: Vec<&[f64]> = x.rows().collect();
    let ys: Vec<&[f64]> = y.rows().collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let stages = cfg.schedule();
    for (s, &eps) in stages.iter().enumerate() {
        let last = s + 1 == stages.len();
        let (tol, cap) = if last { (SINKHORN_TOL, cfg.max_iter) } else { (STAGE_TOL, iterations + STAGE_MAX_ITER) };
        // Long final stages switch to the scaling form once the potentials settle.
        let dense = last && n * m <= DENSE_MAX_ENTRIES && cfg.max_iter > iterations + DENSE_MIN_ITER;
        while iterations < cap.min(cfg.max_iter) {
            iterations += 1;
            f = xs.par_iter().map(|xi| -eps * log_sum_exp(m, |j| (g[j] - sq_dist(xi, ys[j])) / eps + log_b)).collect();
            let lse: Vec<f64> = ys
                .par_iter()
                .map(|yj| log_sum_exp(n, |i| (f[i] - sq_dist(xs[i], yj)) / eps + log_a))
                .collect();
            residual = lse.iter().zip(&g).map(|(l, gj)| ((gj / eps + log_b + l).exp() - 1.0 / m as f64).abs()).sum();
            g = lse.iter().map(|l| -eps * l).collect();
            if residual < tol || (dense && residual < DENSE_SWITCH) {
                break;
            }
        }
        if dense && residual >= tol && iterations < cfg.max_iter {
            let (it, res) = scaling_iterations(&xs, &ys, eps, &mut f, &mut g, cfg.max_iter - iterations, tol);
            iterations += it;
            residual = res;
        }
    }
    let eps = cfg.eps;
    let rows: Vec<(f64, Option<Vec<f64>>)> = xs
        .par_iter()
        .zip(f.par_iter())
        .map(|(xi, fi)| {
            let mut cost = 0.0;
            let mut row = keep_plan.then(|| Vec::with_capacity(m));
            for (yj, gj) in ys.iter().zip(&g) {
                let c = sq_dist(xi, yj);
                let p = ((fi + gj - c) / eps + log_a + log_b).exp();
                cost += p * c;
                if let Some(r) = row.as_mut() {
                    r.push(p);
                }
            }
            (cost, row)
        })
        .collect();
    let cost = rows.iter().map(|r| r.0).sum::<f64>().max(0.0);
    let plan = keep_plan.then(|| TransportPlan { n, m, p: rows.into_iter().flat_map(|r| r.1.unwrap()).collect() });
    if !cost.is_finite() {
        return Err(Error::Degenerate("Sinkhorn produced a non-finite cost".into()));
    }
    Ok(SinkhornResult { cost, iterations, residual, plan })
}

/// Sinkhorn updates on `u_i K_ij v_j` with `K` the plan of the current
/// potentials, which are updated in place. Returns iterations used and the
/// final column residual.
fn scaling_iterations(
    xs: &[&[f64]],
    ys: &[&[f64]],
    eps: f64,
    f: &mut [f64],
    g: &mut [f64],
    max_iter: usize,
    tol: f64,
) -> (usize, f64) {
    let (n, m) = (xs.len(), ys.len());
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let kernel = |f: &[f64], g: &[f64]| -> Vec<f64> {
        xs.par_iter()
            .zip(f.par_iter())
            .flat_map_iter(|(xi, fi)| ys.iter().zip(g).map(move |(yj, gj)| ((fi + gj - sq_dist(xi, yj)) / eps).exp() * a * b))
            .collect()
    };
    let mut k = kernel(f, g);
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    let mut col = vec![0.0; m];
    let mut residual = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        u.par_iter_mut().zip(k.par_chunks(m)).for_each(|(ui, row)| {
            *ui = a / row.iter().zip(&v).map(|(kij, vj)| kij * vj).sum::<f64>();
        });
        col.iter_mut().for_each(|c| *c = 0.0);
        for (ui, row) in u.iter().zip(k.chunks(m)) {
            for (c, kij) in col.iter_mut().zip(row) {
                *c += ui * kij;
            }
        }
        residual = col.iter().zip(&v).map(|(c, vj)| (c * vj - b).abs()).sum();
        v.iter_mut().zip(&col).for_each(|(vj, c)| *vj = b / c);
        let out_of_range = |s: &[f64]| s.iter().any(|x| !(x.abs() < SCALE_LIMIT && x.abs() > 1.0 / SCALE_LIMIT));
        let done = residual < tol;
        if done || it == max_iter || out_of_range(&u) || out_of_range(&v) {
            f.iter_mut().zip(&u).for_each(|(fi, ui)| *fi += eps * ui.ln());
            g.iter_mut().zip(&v).for_each(|(gj, vj)| *gj += eps * vj.ln());
            if done || it == max_iter {
                break;
            }
            k = kernel(f, g);
            u.iter_mut().for_each(|x| *x = 1.0);
            v.iter_mut().for_each(|x| *x = 1.0);
        }
    }
    (it, residual)
}

/// Sinkhorn estimate of the squared 2-Wasserstein distance.
pub fn sinkhorn_wd(x: &SampleMatrix, y: &SampleMatrix, cfg: &SinkhornConfig) -> Result<f64> {
    Ok(sinkhorn(x, y, cfg, false)?.cost)
}

/// `sum_j w_j / n_j sum_x ||x - T_j(x)||^2`.
pub fn transportation_cost(dataset: &LabeledDataset, model: &FlowModel, weights: &WeightVector) -> Result<f64> {
    weights.check_len(dataset.k())?;
    let mapped = model.transform_dataset(dataset)?;
    Ok(dataset
        .classes()
        .iter()
        .zip(mapped.classes())
        .zip(weights.as_slice())
        .map(|((x, z), w)| {
            let total: f64 = x.rows().zip(z.rows()).map(|(a, b)| sq_dist(a, b)).sum();
            w * total / x.n() as f64
        })
        .sum())
}

/// Mean over ordered pairs `j != j'` of the Sinkhorn distance between real
/// class `j` samples and class `j'` samples flipped into class `j`.
pub fn pairwise_flip_wd(dataset: &LabeledDataset, model: &FlowModel, cfg: &SinkhornConfig) -> Result<f64> {
    let k = dataset.k();
    model.check_classes(dataset)?;
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|j| (0..k).filter(move |&jp| jp != j).map(move |jp| (j, jp))).collect();
    let terms = pairs
        .par_iter()
        .map(|&(j, jp)| {
            let flipped = model.flip(jp, j, dataset.class(jp))?;
            sinkhorn_wd(dataset.class(j), &flipped, cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Metrics after `layer` layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub layer: usize,
    pub wd: f64,
    pub tc: f64,
    /// Fitting time spent so far, evaluation excluded.
    pub wall_time_ms: f64,
}

/// Fits a flow on `train` and evaluates it on `test` after every layer,
/// starting with the identity (layer 0). Returns the trace and the model.
pub fn convergence_trace(
    train: &LabeledDataset,
    test: &LabeledDataset,
    weights: &WeightVector,
    schedule: &[LayerConfig],
    cfg: &SinkhornConfig,
    seed: u64,
) -> Result<(Vec<TraceRow>, FlowModel)> {
    let identity = FlowModel::identity(train.d(), train.labels(), weights.clone())?;
    let mut rows = vec![TraceRow {
        layer: 0,
        wd: pairwise_flip_wd(test, &identity, cfg)?,
        tc: transportation_cost(test, &identity, weights)?,
        wall_time_ms: 0.0,
    }];
    let mut fit_ms = 0.0;
    let mut start = Instant::now();
    let model = fit_flow_with(train, weights, schedule, seed, |layer, model, _| {
        fit_ms += start.elapsed().as_secs_f64() * 1e3;
        rows.push(TraceRow {
            layer,
            wd: pairwise_flip_wd(test, model, cfg)?,
            tc: transportation_cost(test, model, weights)?,
            wall_time_ms: fit_ms,
        });
        start = Instant::now();
        Ok(())
    })?;
    Ok((rows, model))
}

/// Closed-form squared 2-Wasserstein distance between two Gaussians.
pub fn gaussian_w2_squared(p: &GaussianParams, q: &GaussianParams) -> Result<f64> {
    let dm = (&p.mean - &q.mean).norm_squared();
    let sq = matrix_sqrt_psd(&q.cov)?;
    let inner: DMatrix<f64> = &sq * &p.cov * &sq;
    let inner = 0.5 * (&inner + inner.transpose());
    let cross = matrix_sqrt_psd(&inner)?;
    Ok(dm + (p.cov.trace() + q.cov.trace() - 2.0 * cross.trace()).max(0.0))
}
