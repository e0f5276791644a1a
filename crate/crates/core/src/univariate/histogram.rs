use serde::{Deserialize, Serialize};

use super::level::Level;
use crate::error::{Error, Result};

/// Position inside a histogram's support, kept as distances to both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offset {
    pub from_lo: f64,
    pub to_hi: f64,
}

/// Piecewise-constant density on `[edges[0], edges[B]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramRecord", into = "HistogramRecord")]
pub struct Histogram1D {
    edges: Vec<f64>,
    densities: Vec<f64>,
    /// Mass strictly left of edge `b`.
    cum: Vec<f64>,
    /// Mass strictly right of edge `b`.
    rcum: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HistogramRecord {
    edges: Vec<f64>,
    densities: Vec<f64>,
}

impl TryFrom<HistogramRecord> for Histogram1D {
    type Error = Error;
    fn try_from(r: HistogramRecord) -> Result<Self> {
        Histogram1D::new(r.edges, r.densities)
    }
}

impl From<Histogram1D> for HistogramRecord {
    fn from(h: Histogram1D) -> Self {
        Self { edges: h.edges, densities: h.densities }
    }
}

impl Histogram1D {
    pub const MASS_TOLERANCE: f64 = 1e-12;

    /// Validates a normalized histogram: strictly increasing edges, positive densities, unit mass.
    pub fn new(edges: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || densities.len() + 1 != edges.len() {
            return Err(Error::invalid(format!(
                "histogram needs B+1 edges for B >= 1 bins, got {} edges and {} densities",
                edges.len(),
                densities.len()
            )));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("histogram edges must be finite and strictly increasing"));
        }
        if densities.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid("histogram densities must be positive and finite"));
        }
        let b = densities.len();
        let masses: Vec<f64> = (0..b).map(|i| densities[i] * (edges[i + 1] - edges[i])).collect();
        let mut cum = vec![0.0; b + 1];
        for i in 0..b {
            cum[i + 1] = cum[i] + masses[i];
        }
        let mut rcum = vec![0.0; b + 1];
        for i in (0..b).rev() {
            rcum[i] = rcum[i + 1] + masses[i];
        }
        if (cum[b] - 1.0).abs() > Self::MASS_TOLERANCE {
            return Err(Error::invalid(format!("histogram mass is {}, expected 1", cum[b])));
        }
        Ok(Self { edges, densities, cum, rcum })
    }

    /// Histogram with the given (unnormalized, positive) bin masses.
    pub fn from_masses(edges: Vec<f64>, masses: &[f64]) -> Result<Self> {
        if masses.len() + 1 != edges.len() {
            return Err(Error::invalid("histogram needs one more edge than masses"));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("histogram masses must have a positive finite sum"));
        }
        let densities = masses
            .iter()
            .zip(edges.windows(2))
            .map(|(m, w)| m / total / (w[1] - w[0]))
            .collect();
        Self::new(edges, densities)
    }

    /// Equal-width histogram on `[0, 1]` with `alpha` pseudo-counts per bin.
    /// Values outside `[0, 1]` are counted in the nearest end bin.
    pub fn fit_unit(values: &[f64], bins: usize, alpha: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if !(alpha >= 0.0) {
            return Err(Error::invalid("pseudo-count must be non-negative"));
        }
        let mut counts = vec![alpha; bins];
        for &v in values {
            let idx = (v * bins as f64).floor();
            let idx = if idx < 0.0 { 0 } else { (idx as usize).min(bins - 1) };
            counts[idx] += 1.0;
        }
        if counts.iter().any(|&c| c <= 0.0) {
            return Err(Error::Degenerate("empty histogram bin with zero pseudo-count".into()));
        }
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Self::from_masses(edges, &counts)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.bins()]
    }

    pub fn total_mass(&self) -> f64 {
        self.cum[self.bins()]
    }

    /// Cumulative mass at every edge, from 0 to 1.
    pub fn mass_levels(&self) -> Vec<Level> {
        self.cum
            .iter()
            .zip(&self.rcum)
            .map(|(&l, &u)| Level::from_parts(l, u))
            .collect()
    }

    pub fn offset_of(&self, x: f64) -> Offset {
        Offset { from_lo: x - self.lo(), to_hi: self.hi() - x }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return 0.0;
        }
        self.densities[self.bin_of(x)]
    }

    fn bin_of(&self, x: f64) -> usize {
        let b = self.bins();
        self.edges[1..b].partition_point(|&e| e <= x)
    }

    /// CDF at a position given by its distances to both ends.
    pub fn cdf_at(&self, off: Offset) -> Level {
        if off.from_lo <= 0.0 {
            return Level::ZERO;
        }
        if off.to_hi <= 0.0 {
            return Level::ONE;
        }
        let nb = self.bins();
        let x = if off.from_lo <= off.to_hi { self.lo() + off.from_lo } else { self.hi() - off.to_hi };
        let b = self.bin_of(x);
        let d = self.densities[b];
        let lower = if b == 0 { d * off.from_lo } else { self.cum[b] + d * (x - self.edges[b]) };
        let upper = if b == nb - 1 { d * off.to_hi } else { self.rcum[b + 1] + d * (self.edges[b + 1] - x) };
        Level::from_parts(lower, upper)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_at(self.offset_of(x)).value()
    }

    /// Inverse of [`cdf_at`](Self::cdf_at).
    pub fn quantile_at(&self, level: Level) -> Offset {
        let nb = self.bins();
        let width = self.hi() - self.lo();
        if level.is_lower_half() {
            let p = level.value();
            let b = self.cum[1..nb].partition_point(|&c| c <= p);
            let d = self.densities[b];
            let from_lo = if b == 0 { p / d } else { (self.edges[b] - self.lo()) + (p - self.cum[b]) / d };
            let from_lo = from_lo.clamp(0.0, width);
            Offset { from_lo, to_hi: width - from_lo }
        } else {
            let q = level.complement();
            // bins counted from the right: rcum is decreasing in b
            let b = nb - 1 - self.rcum[1..nb].iter().rev().take_while(|&&r| r <= q).count();
            let d = self.densities[b];
            let to_hi =
                if b == nb - 1 { q / d } else { (self.hi() - self.edges[b + 1]) + (q - self.rcum[b + 1]) / d };
            let to_hi = to_hi.clamp(0.0, width);
            Offset { from_lo: width - to_hi, to_hi }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let off = self.quantile_at(Level::new(u));
        self.lo() + off.from_lo
    }

    pub(crate) fn quantile_level(&self, level: Level) -> f64 {
        let off = self.quantile_at(level);
        if off.from_lo <= off.to_hi {
            self.lo() + off.from_lo
        } else {
            self.hi() - off.to_hi
        }
    }

    pub(crate) fn cdf_level(&self, x: f64) -> Level {
        self.cdf_at(self.offset_of(x))
    }
}
