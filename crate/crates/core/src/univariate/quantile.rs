//! Piecewise-linear quantile functions and 1D barycenters.
//!
//! The barycenter of 1D measures has quantile `sum_j w_j F_j^{-1}(u)`. For
//! histograms this is again piecewise linear in `u`, with breakpoints at the
//! union of the components' cumulative masses, so the barycenter is itself a
//! histogram. For Gaussian-squeezed densities the grid is refined adaptively
//! and the unbounded tails are continued linearly in probit space.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::density::UnivariateDensity;
use super::histogram::Histogram1D;
use super::level::{normal_cdf, normal_quantile, Level};
use crate::data::WeightVector;
use crate::error::{Error, Result};

/// Mass levels kept away from 0 and 1 when a component has unbounded support.
pub const TAIL_CLIP: f64 = 1e-9;
/// Refinement stops once linear interpolation is within this fraction of the quantile range.
const REFINE_REL_TOL: f64 = 1e-5;
const REFINE_MAX_DEPTH: u32 = 10;

/// A continuous 1D distribution with a CDF and quantile function.
pub trait Univariate {
    fn cdf_level(&self, x: f64) -> Level;
    fn quantile_level(&self, level: Level) -> f64;
    /// Levels at which the quantile function changes slope.
    fn mass_levels(&self) -> Vec<Level>;
    /// Probit-space scale of the tails; `None` for bounded support.
    fn tail_scale(&self) -> Option<f64>;
    /// True when the quantile is exactly linear between consecutive mass levels.
    fn piecewise_linear_quantile(&self) -> bool;
}

impl Univariate for Histogram1D {
    fn cdf_level(&self, x: f64) -> Level {
        Histogram1D::cdf_level(self, x)
    }
    fn quantile_level(&self, level: Level) -> f64 {
        Histogram1D::quantile_level(self, level)
    }
    fn mass_levels(&self) -> Vec<Level> {
        Histogram1D::mass_levels(self)
    }
    fn tail_scale(&self) -> Option<f64> {
        None
    }
    fn piecewise_linear_quantile(&self) -> bool {
        true
    }
}

impl Univariate for UnivariateDensity {
    fn cdf_level(&self, x: f64) -> Level {
        UnivariateDensity::cdf_level(self, x)
    }
    fn quantile_level(&self, level: Level) -> f64 {
        UnivariateDensity::quantile_level(self, level)
    }
    fn mass_levels(&self) -> Vec<Level> {
        UnivariateDensity::mass_levels(self)
    }
    fn tail_scale(&self) -> Option<f64> {
        Some(self.pre_std)
    }
    fn piecewise_linear_quantile(&self) -> bool {
        false
    }
}

impl<T: Univariate + ?Sized> Univariate for &T {
    fn cdf_level(&self, x: f64) -> Level {
        (**self).cdf_level(x)
    }
    fn quantile_level(&self, level: Level) -> f64 {
        (**self).quantile_level(level)
    }
    fn mass_levels(&self) -> Vec<Level> {
        (**self).mass_levels()
    }
    fn tail_scale(&self) -> Option<f64> {
        (**self).tail_scale()
    }
    fn piecewise_linear_quantile(&self) -> bool {
        (**self).piecewise_linear_quantile()
    }
}

/// Monotone piecewise-linear map from probability levels to `R`.
///
/// Between breakpoints the value is linear in the level. Outside the first
/// and last breakpoint it is either constant (bounded support) or linear in
/// the probit of the level with the stored slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuantileRecord", into = "QuantileRecord")]
pub struct QuantileFunction {
    levels: Vec<Level>,
    values: Vec<f64>,
    lower_tail: Option<f64>,
    upper_tail: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct QuantileRecord {
    /// `[u, 1 - u, x]` triples.
    breakpoints: Vec<[f64; 3]>,
    lower_tail: Option<f64>,
    upper_tail: Option<f64>,
}

impl From<QuantileFunction> for QuantileRecord {
    fn from(q: QuantileFunction) -> Self {
        Self {
            breakpoints: q
                .levels
                .iter()
                .zip(&q.values)
                .map(|(l, &x)| [l.value(), l.complement(), x])
                .collect(),
            lower_tail: q.lower_tail,
            upper_tail: q.upper_tail,
        }
    }
}

impl TryFrom<QuantileRecord> for QuantileFunction {
    type Error = Error;
    fn try_from(r: QuantileRecord) -> Result<Self> {
        let levels = r.breakpoints.iter().map(|b| Level::from_raw(b[0], b[1])).collect();
        let values = r.breakpoints.iter().map(|b| b[2]).collect();
        QuantileFunction::new(levels, values, r.lower_tail, r.upper_tail)
    }
}

impl QuantileFunction {
    pub fn new(levels: Vec<Level>, values: Vec<f64>, lower_tail: Option<f64>, upper_tail: Option<f64>) -> Result<Self> {
        if levels.len() < 2 || levels.len() != values.len() {
            return Err(Error::invalid("quantile function needs at least two breakpoints"));
        }
        if levels.windows(2).any(|w| w[0].cmp_level(w[1]) != Ordering::Less) {
            return Err(Error::invalid("quantile levels must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("quantile values must be finite and strictly increasing"));
        }
        for t in [lower_tail, upper_tail].into_iter().flatten() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("tail slopes must be positive"));
            }
        }
        Ok(Self { levels, values, lower_tail, upper_tail })
    }

    /// The exact quantile function of a histogram.
    pub fn from_histogram(h: &Histogram1D) -> Self {
        Self { levels: h.mass_levels(), values: h.edges().to_vec(), lower_tail: None, upper_tail: None }
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (Level, f64)> + '_ {
        self.levels.iter().copied().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn eval_level(&self, level: Level) -> f64 {
        let last = self.levels.len() - 1;
        if level.cmp_level(self.levels[0]) == Ordering::Less {
            return match self.lower_tail {
                Some(t) => self.values[0] + t * (normal_quantile(level) - normal_quantile(self.levels[0])),
                None => self.values[0],
            };
        }
        if level.cmp_level(self.levels[last]) == Ordering::Greater {
            return match self.upper_tail {
                Some(t) => self.values[last] + t * (normal_quantile(level) - normal_quantile(self.levels[last])),
                None => self.values[last],
            };
        }
        let idx = self.levels.partition_point(|l| l.cmp_level(level) != Ordering::Greater);
        let i = idx.saturating_sub(1).min(last - 1);
        let (a, b) = (self.levels[i], self.levels[i + 1]);
        let t = a.gap_to(level) / a.gap_to(b);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.eval_level(Level::new(u))
    }

    /// The CDF this quantile function inverts.
    pub fn cdf_level(&self, x: f64) -> Level {
        let last = self.values.len() - 1;
        if x < self.values[0] {
            return match self.lower_tail {
                Some(t) => normal_cdf(normal_quantile(self.levels[0]) + (x - self.values[0]) / t),
                None => self.levels[0],
            };
        }
        if x > self.values[last] {
            return match self.upper_tail {
                Some(t) => normal_cdf(normal_quantile(self.levels[last]) + (x - self.values[last]) / t),
                None => self.levels[last],
            };
        }
        let idx = self.values.partition_point(|&v| v <= x);
        let i = idx.saturating_sub(1).min(last - 1);
        let t = (x - self.values[i]) / (self.values[i + 1] - self.values[i]);
        let (a, b) = (self.levels[i], self.levels[i + 1]);
        a.advance(t * a.gap_to(b))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_level(x).value()
    }
}

fn sorted_unique(mut levels: Vec<Level>) -> Vec<Level> {
    levels.sort_by(|a, b| a.cmp_level(*b));
    levels.dedup_by(|a, b| a.cmp_level(*b) == Ordering::Equal);
    levels
}

/// Weighted quantile average, kept inside the range of the component values
/// so that shared endpoints come out exact.
fn weighted_quantile<D: Univariate>(comps: &[D], w: &[f64], level: Level) -> f64 {
    let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for (c, &wj) in comps.iter().zip(w).filter(|(_, &wj)| wj > 0.0) {
        let q = c.quantile_level(level);
        sum += wj * q;
        lo = lo.min(q);
        hi = hi.max(q);
    }
    sum.clamp(lo, hi)
}

fn probit_midpoint(a: Level, b: Level) -> Level {
    let m = normal_cdf(0.5 * (normal_quantile(a) + normal_quantile(b)));
    if m.cmp_level(a) == Ordering::Greater && m.cmp_level(b) == Ordering::Less {
        m
    } else {
        a.advance(0.5 * a.gap_to(b))
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<D: Univariate>(
    comps: &[D],
    w: &[f64],
    a: (Level, f64),
    b: (Level, f64),
    tol: f64,
    depth: u32,
    out: &mut Vec<(Level, f64)>,
) {
    if depth >= REFINE_MAX_DEPTH {
        return;
    }
    let m = probit_midpoint(a.0, b.0);
    if m.cmp_level(a.0) != Ordering::Greater || m.cmp_level(b.0) != Ordering::Less {
        return;
    }
    let xm = weighted_quantile(comps, w, m);
    let t = a.0.gap_to(m) / a.0.gap_to(b.0);
    let lin = a.1 + t * (b.1 - a.1);
    if (lin - xm).abs() <= tol {
        return;
    }
    refine(comps, w, a, (m, xm), tol, depth + 1, out);
    out.push((m, xm));
    refine(comps, w, (m, xm), b, tol, depth + 1, out);
}

/// Barycenter quantile `u -> sum_j w_j F_j^{-1}(u)` as a piecewise-linear function.
///
/// The grid contains every component's mass levels, so the result is exact
/// when all components have piecewise-linear quantiles. Otherwise the grid is
/// refined until linear interpolation matches the exact weighted average, and
/// unbounded components get probit-linear tails beyond `[TAIL_CLIP, 1 - TAIL_CLIP]`
/// with slope `sum_j w_j scale_j`.
pub fn barycenter_quantile<D: Univariate>(comps: &[D], weights: &WeightVector) -> Result<QuantileFunction> {
    if comps.is_empty() {
        return Err(Error::invalid("barycenter of zero components"));
    }
    weights.check_len(comps.len())?;
    let w = weights.as_slice();
    let unbounded = comps.iter().any(|c| c.tail_scale().is_some());
    let exact = comps.iter().all(|c| c.piecewise_linear_quantile());

    let mut levels: Vec<Level> = comps.iter().flat_map(|c| c.mass_levels()).collect();
    if unbounded {
        let lo = Level::new(TAIL_CLIP);
        let hi = Level::from_upper(TAIL_CLIP);
        levels.retain(|l| l.cmp_level(lo) == Ordering::Greater && l.cmp_level(hi) == Ordering::Less);
        levels.push(lo);
        levels.push(hi);
    }
    let levels = sorted_unique(levels);
    let mut points: Vec<(Level, f64)> = levels.iter().map(|&l| (l, weighted_quantile(comps, w, l))).collect();

    if !exact {
        let spread = points.last().unwrap().1 - points[0].1;
        let tol = REFINE_REL_TOL * spread.max(f64::MIN_POSITIVE);
        let mut refined = Vec::with_capacity(points.len() * 2);
        for pair in points.windows(2) {
            refined.push(pair[0]);
            refine(comps, w, pair[0], pair[1], tol, 0, &mut refined);
        }
        refined.push(*points.last().unwrap());
        points = refined;
    }

    // Drop breakpoints that collapse in value under rounding.
    let mut kept: Vec<(Level, f64)> = Vec::with_capacity(points.len());
    for p in points {
        match kept.last() {
            Some(last) if p.1 <= last.1 => {}
            _ => kept.push(p),
        }
    }
    if kept.len() < 2 {
        return Err(Error::Degenerate("barycenter quantile collapsed to a point".into()));
    }
    let tail = if unbounded {
        Some(
            comps
                .iter()
                .zip(w)
                .map(|(c, &wj)| wj * c.tail_scale().unwrap_or(0.0))
                .sum::<f64>(),
        )
        .filter(|t| *t > 0.0)
    } else {
        None
    };
    let (levels, values) = kept.into_iter().unzip();
    QuantileFunction::new(levels, values, tail, tail)
}

/// Barycenter of histograms, which is again a histogram.
///
/// Its edges are the weighted quantile average at the union of all input mass
/// levels; adjacent bins of equal density are merged, so the edge count never
/// exceeds the total number of input edges.
pub fn histogram_barycenter(hists: &[Histogram1D], weights: &WeightVector) -> Result<Histogram1D> {
    if hists.is_empty() {
        return Err(Error::invalid("barycenter of zero histograms"));
    }
    weights.check_len(hists.len())?;
    let w = weights.as_slice();
    let levels = sorted_unique(hists.iter().flat_map(|h| h.mass_levels()).collect());
    let xs: Vec<f64> = levels.iter().map(|&l| weighted_quantile(hists, w, l)).collect();

    let mut edges = vec![xs[0]];
    let mut masses: Vec<f64> = Vec::new();
    let mut pending = 0.0;
    for i in 0..levels.len() - 1 {
        pending += levels[i].gap_to(levels[i + 1]);
        if xs[i + 1] > *edges.last().unwrap() {
            edges.push(xs[i + 1]);
            masses.push(pending);
            pending = 0.0;
        }
    }
    if let Some(m) = masses.last_mut() {
        *m += pending;
    }
    if masses.is_empty() {
        return Err(Error::Degenerate("histogram barycenter has zero width".into()));
    }

    let mut merged_edges = vec![edges[0]];
    let mut merged_masses: Vec<f64> = Vec::new();
    for i in 0..masses.len() {
        let dens = masses[i] / (edges[i + 1] - edges[i]);
        let same = merged_masses.last().is_some_and(|&m| {
            let n = merged_edges.len();
            let prev = m / (merged_edges[n - 1] - merged_edges[n - 2]);
            (prev - dens).abs() <= 1e-12 * prev.max(dens)
        });
        if same {
            *merged_masses.last_mut().unwrap() += masses[i];
            *merged_edges.last_mut().unwrap() = edges[i + 1];
        } else {
            merged_masses.push(masses[i]);
            merged_edges.push(edges[i + 1]);
        }
    }
    Histogram1D::from_masses(merged_edges, &merged_masses)
}
