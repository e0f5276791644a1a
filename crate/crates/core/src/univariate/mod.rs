//! One-dimensional densities, quantile functions, barycenters and optimal maps.

mod density;
mod histogram;
mod level;
mod monge;
mod quantile;

pub use density::{fit_univariate_density, DensityConfig, UnivariateDensity};
pub use histogram::{Histogram1D, Offset};
pub use level::{normal_cdf, normal_quantile, Level, MIN_LEVEL};
pub use monge::{monge_1d, Monge1d, PiecewiseLinearMap};
pub use quantile::{barycenter_quantile, histogram_barycenter, QuantileFunction, Univariate, TAIL_CLIP};
