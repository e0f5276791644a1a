//! # baryflow
//!
//! Estimates invertible maps `T_1, ..., T_k` that carry `k` sample
//! distributions onto their shared Wasserstein barycenter. Maps are built by
//! stacking closed-form layers, each of which solves the multi-marginal
//! optimal-transport problem for a simple density model fitted to the current
//! samples:
//!
//! - [`gaussian`]: Gaussian class models, affine maps to the Gaussian barycenter.
//! - [`nb`]: independent components along a shared orthonormal frame, with
//!   1D histogram maps per direction. The frame is random, the identity, or
//!   chosen to maximise the sliced discrepancy between classes.
//! - [`tree`]: piecewise-constant densities on a shared decision tree, mapped
//!   by nested 2-bin histogram problems.
//!
//! [`flow::fit_flow`] drives the layers, [`metrics`] evaluates the result
//! (transportation cost and Sinkhorn distances between real and translated
//! samples) and [`datasets`] provides synthetic 2D benchmarks and CSV I/O.

pub mod data;
pub mod datasets;
pub mod error;
pub mod flow;
pub mod gaussian;
pub mod map;
pub mod metrics;
pub mod nb;
pub mod rng;
pub mod tree;
pub mod univariate;

pub use data::{LabeledDataset, SampleMatrix, WeightVector};
pub use error::{Error, Result};
pub use flow::{fit_flow, fit_flow_with, FlowModel, Layer, LayerConfig};
pub use map::InvertibleMap;
