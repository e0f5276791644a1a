use serde::{Deserialize, Serialize};

use super::histogram::Histogram1D;
use super::quantile::{QuantileFunction, Univariate};
use crate::error::{Error, Result};

/// The 1D optimal map `F_bary^{-1} o F_j` from a class distribution to a barycenter.
#[derive(Debug, Clone, PartialEq)]
pub struct Monge1d<D> {
    pub source: D,
    pub target: QuantileFunction,
}

/// Builds the increasing map from `source` onto the distribution with quantile `target`.
pub fn monge_1d<D: Univariate>(source: D, target: QuantileFunction) -> Monge1d<D> {
    Monge1d { source, target }
}

impl<D: Univariate> Monge1d<D> {
    pub fn forward(&self, x: f64) -> f64 {
        self.target.eval_level(self.source.cdf_level(x))
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.source.quantile_level(self.target.cdf_level(z))
    }
}

/// Strictly increasing piecewise-linear bijection of `[xs[0], xs[n]]` onto `[ys[0], ys[n]]`.
///
/// Outside the knot range it continues as a translation, so it is a bijection of `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotRecord", into = "KnotRecord")]
pub struct PiecewiseLinearMap {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KnotRecord {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl TryFrom<KnotRecord> for PiecewiseLinearMap {
    type Error = Error;
    fn try_from(r: KnotRecord) -> Result<Self> {
        PiecewiseLinearMap::new(r.xs, r.ys)
    }
}

impl From<PiecewiseLinearMap> for KnotRecord {
    fn from(m: PiecewiseLinearMap) -> Self {
        Self { xs: m.xs, ys: m.ys }
    }
}

fn interp(from: &[f64], to: &[f64], x: f64) -> f64 {
    let last = from.len() - 1;
    if x <= from[0] {
        return to[0] + (x - from[0]);
    }
    if x >= from[last] {
        return to[last] + (x - from[last]);
    }
    let i = from.partition_point(|&v| v <= x).saturating_sub(1).min(last - 1);
    let t = (x - from[i]) / (from[i + 1] - from[i]);
    to[i] + t * (to[i + 1] - to[i])
}

impl PiecewiseLinearMap {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::invalid("piecewise-linear map needs at least two knots"));
        }
        let increasing = |v: &[f64]| v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&xs) || !increasing(&ys) {
            return Err(Error::invalid("piecewise-linear knots must be strictly increasing"));
        }
        Ok(Self { xs, ys })
    }

    pub fn identity(lo: f64, hi: f64) -> Self {
        Self { xs: vec![lo, hi], ys: vec![lo, hi] }
    }

    /// The exact histogram-to-histogram optimal map `F_bary^{-1} o F_source`.
    ///
    /// Knots sit at the source edges and at the source quantiles of the
    /// barycenter's mass levels; the end points map onto the barycenter's ends.
    pub fn between_histograms(source: &Histogram1D, bary: &Histogram1D) -> Result<Self> {
        let mut xs: Vec<f64> = source.edges().to_vec();
        xs.extend(bary.mass_levels().into_iter().map(|l| source.quantile_level(l)));
        xs.sort_by(f64::total_cmp);
        let width = source.hi() - source.lo();
        xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * width);
        let mut knots_x = Vec::with_capacity(xs.len());
        let mut knots_y = Vec::with_capacity(xs.len());
        let last = xs.len() - 1;
        for (i, &x) in xs.iter().enumerate() {
            let y = if i == 0 {
                bary.lo()
            } else if i == last {
                bary.hi()
            } else {
                bary.quantile_level(source.cdf_level(x))
            };
            if knots_y.last().is_some_and(|&prev| y <= prev) && i != last {
                continue;
            }
            if i == last {
                while knots_y.last().is_some_and(|&prev| y <= prev) {
                    knots_x.pop();
                    knots_y.pop();
                }
            }
            knots_x.push(x);
            knots_y.push(y);
        }
        knots_x[0] = source.lo();
        *knots_x.last_mut().unwrap() = source.hi();
        Self::new(knots_x, knots_y)
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn is_identity(&self) -> bool {
        self.xs == self.ys
    }

    pub fn forward(&self, x: f64) -> f64 {
        interp(&self.xs, &self.ys, x)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        interp(&self.ys, &self.xs, y)
    }
}
