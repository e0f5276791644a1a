use serde::{Deserialize, Serialize};

use super::histogram::{Histogram1D, Offset};
use super::level::{normal_cdf, normal_quantile, Level};
use crate::error::{Error, Result};

/// Histogram density estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityConfig {
    pub bins: usize,
    /// Pseudo-counts added to every bin.
    pub alpha: f64,
    pub std_floor: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self { bins: 40, alpha: 1.0, std_floor: 1e-8 }
    }
}

/// A 1D density: a Gaussian CDF squeezes the line onto `[0, 1]` and a
/// histogram models the squeezed values.
///
/// `F(x) = H(Phi((x - pre_mean) / pre_std))`, which is continuous and strictly
/// increasing on all of `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateDensity {
    pub pre_mean: f64,
    pub pre_std: f64,
    #[serde(flatten, with = "hist_fields")]
    pub hist: Histogram1D,
}

mod hist_fields {
    use super::Histogram1D;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Fields {
        hist_edges: Vec<f64>,
        hist_densities: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(h: &Histogram1D, s: S) -> Result<S::Ok, S::Error> {
        Fields { hist_edges: h.edges().to_vec(), hist_densities: h.densities().to_vec() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Histogram1D, D::Error> {
        let f = Fields::deserialize(d)?;
        Histogram1D::new(f.hist_edges, f.hist_densities).map_err(serde::de::Error::custom)
    }
}

impl UnivariateDensity {
    pub fn new(pre_mean: f64, pre_std: f64, hist: Histogram1D) -> Result<Self> {
        if !pre_mean.is_finite() || !(pre_std > 0.0 && pre_std.is_finite()) {
            return Err(Error::invalid("preprocessor mean must be finite and std positive"));
        }
        if hist.lo() != 0.0 || hist.hi() != 1.0 {
            return Err(Error::invalid("preprocessed histogram must live on [0, 1]"));
        }
        Ok(Self { pre_mean, pre_std, hist })
    }

    pub fn cdf_level(&self, x: f64) -> Level {
        let v = normal_cdf((x - self.pre_mean) / self.pre_std);
        self.hist.cdf_at(Offset { from_lo: v.value(), to_hi: v.complement() })
    }

    pub fn quantile_level(&self, level: Level) -> f64 {
        let off = self.hist.quantile_at(level);
        let v = Level::from_parts(off.from_lo, off.to_hi);
        self.pre_mean + self.pre_std * normal_quantile(v)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_level(x).value()
    }

    /// Inverse CDF on the open interval `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(format!("quantile level {u} outside (0, 1)")));
        }
        Ok(self.quantile_level(Level::new(u)))
    }

    /// Cumulative masses at the histogram edges.
    pub fn mass_levels(&self) -> Vec<Level> {
        self.hist.mass_levels()
    }
}

/// Fits the preprocessor from the sample mean and (floored) standard deviation,
/// then a smoothed equal-width histogram of the squeezed samples.
pub fn fit_univariate_density(samples: &[f64], cfg: &DensityConfig) -> Result<UnivariateDensity> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot fit a density to zero samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(cfg.std_floor);
    let squeezed: Vec<f64> = samples.iter().map(|x| normal_cdf((x - mean) / std).value()).collect();
    let hist = Histogram1D::fit_unit(&squeezed, cfg.bins, cfg.alpha)?;
    UnivariateDensity::new(mean, std, hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_hist(b: usize) -> Histogram1D {
        Histogram1D::from_masses((0..=b).map(|i| i as f64 / b as f64).collect(), &vec![1.0; b]).unwrap()
    }

    #[test]
    fn constant_samples_use_floor() {
        let d = fit_univariate_density(&[2.0; 10], &DensityConfig::default()).unwrap();
        assert_eq!(d.pre_std, 1e-8);
        assert_eq!(d.pre_mean, 2.0);
        let dens = d.hist.densities();
        let peak = dens.iter().cloned().fold(0.0, f64::max);
        assert_eq!(dens[20], peak);
        assert!(dens.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn symmetric_density_centre() {
        let d = UnivariateDensity::new(1.5, 2.0, uniform_hist(4)).unwrap();
        assert_eq!(d.cdf(1.5), 0.5);
        assert!((d.quantile(0.5).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn limits_and_round_trip() {
        let h = Histogram1D::new(vec![0.0, 0.5, 1.0], vec![1.6, 0.4]).unwrap();
        let d = UnivariateDensity::new(-1.0, 0.5, h).unwrap();
        assert!(d.cdf(-1e6) < 1e-300);
        assert_eq!(d.cdf(1e6), 1.0);
        for &u in &[1e-12, 0.01, 0.3, 0.8, 0.999999] {
            let x = d.quantile(u).unwrap();
            assert!((d.cdf(x) - u).abs() < 1e-10);
        }
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());
    }

    #[test]
    fn rejects_bad_preprocessor() {
        assert!(UnivariateDensity::new(0.0, 0.0, uniform_hist(2)).is_err());
        let shifted = Histogram1D::from_masses(vec![0.0, 2.0], &[1.0]).unwrap();
        assert!(UnivariateDensity::new(0.0, 1.0, shifted).is_err());
    }
}
