//! Layer stacks, the iterative fitting driver and the model file format.
//!
//! Fitting repeats, for every entry of the schedule: fit the layer's density
//! models to the current per-class samples, derive the maps to their
//! barycenter, then replace each class's samples by their image. A fitted
//! [`FlowModel`] composes the layers in order for every class.
//!
//! Models are stored as JSON:
//!
//! ```text
//! { "format": "baryflow-model", "version": 1, "d": .., "k": .., "weights": [..], "labels": [..],
//!   "metadata": { "seed": .., "schedule": [..] },
//!   "layers": [ { "kind": "gaussian" | "nb" | "tree", .. }, .. ] }
//! ```
//!
//! Floats are written with round-trip precision, so a reloaded model
//! reproduces every transform bit for bit.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{LabeledDataset, SampleMatrix, WeightVector};
use crate::error::{Error, Result};
use crate::gaussian::{fit_gaussian_layer, AffineMap, AffineMapRecord, GaussianConfig, GaussianLayer};
use crate::map::InvertibleMap;
use crate::nb::{fit_nb_layer, NbConfig, NbLayer, NbRecord};
use crate::tree::{fit_tree_layer, TreeConfig, TreeLayer};

pub const FORMAT_NAME: &str = "baryflow-model";
pub const FORMAT_VERSION: u32 = 1;

/// One schedule entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerConfig {
    Gaussian(GaussianConfig),
    Nb(NbConfig),
    Tree(TreeConfig),
}

impl LayerConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gaussian(_) => "gaussian",
            Self::Nb(_) => "nb",
            Self::Tree(_) => "tree",
        }
    }
}

/// A fitted layer holding the maps of all classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Gaussian(GaussianLayer),
    Nb(NbLayer),
    Tree(TreeLayer),
}

impl Layer {
    pub fn fit(
        dataset: &LabeledDataset,
        weights: &WeightVector,
        cfg: &LayerConfig,
        seed: u64,
        index: usize,
    ) -> Result<Self> {
        Ok(match cfg {
            LayerConfig::Gaussian(c) => Self::Gaussian(fit_gaussian_layer(dataset, weights, c)?),
            LayerConfig::Nb(c) => Self::Nb(fit_nb_layer(dataset, weights, c, seed, index as u64)?),
            LayerConfig::Tree(c) => Self::Tree(fit_tree_layer(dataset, weights, c)?),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gaussian(_) => "gaussian",
            Self::Nb(_) => "nb",
            Self::Tree(_) => "tree",
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Gaussian(l) => l.maps.len(),
            Self::Nb(l) => l.k(),
            Self::Tree(l) => l.k(),
        }
    }

    /// Class `j`'s map of this layer.
    pub fn class_map(&self, class: usize) -> Box<dyn InvertibleMap + Sync + '_> {
        match self {
            Self::Gaussian(l) => Box::new(&l.maps[class]),
            Self::Nb(l) => Box::new(l.class_map(class)),
            Self::Tree(l) => Box::new(l.class_map(class)),
        }
    }

    /// True when every class map is the identity.
    pub fn is_identity(&self) -> bool {
        match self {
            Self::Gaussian(l) => l.maps.iter().all(AffineMap::is_identity),
            Self::Nb(l) => l.is_identity(),
            Self::Tree(l) => l.is_identity(),
        }
    }
}

/// Fitted maps `T_1, ..., T_k`, each a stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    d: usize,
    weights: WeightVector,
    labels: Vec<i64>,
    seed: u64,
    schedule: Vec<LayerConfig>,
    layers: Vec<Layer>,
}

impl FlowModel {
    /// Model without layers; every class map is the identity.
    pub fn identity(d: usize, labels: Vec<i64>, weights: WeightVector) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::invalid("a model needs at least two classes"));
        }
        weights.check_len(labels.len())?;
        Ok(Self { d, weights, labels, seed: 0, schedule: Vec::new(), layers: Vec::new() })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn schedule(&self) -> &[LayerConfig] {
        &self.schedule
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// The first `m` layers as a model of their own.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.layers.len());
        Self {
            schedule: self.schedule[..m].to_vec(),
            layers: self.layers[..m].to_vec(),
            ..self.clone()
        }
    }

    /// Index of the class with the given label.
    pub fn class_index(&self, label: i64) -> Result<usize> {
        self.labels.iter().position(|&l| l == label).ok_or(Error::UnknownLabel(label))
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.k() {
            return Err(Error::ClassOutOfRange { index: class, k: self.k() });
        }
        Ok(())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got });
        }
        Ok(())
    }

    /// `T_j(x)` for one point.
    pub fn forward_point(&self, class: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_class(class)?;
        self.check_dim(x.len())?;
        let mut cur = x.to_vec();
        let mut next = vec![0.0; x.len()];
        for layer in &self.layers {
            layer.class_map(class).forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// `T_j^{-1}(z)` for one point.
    pub fn inverse_point(&self, class: usize, z: &[f64]) -> Result<Vec<f64>> {
        self.check_class(class)?;
        self.check_dim(z.len())?;
        let mut cur = z.to_vec();
        let mut next = vec![0.0; z.len()];
        for layer in self.layers.iter().rev() {
            layer.class_map(class).inverse_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn map_rows(&self, points: &SampleMatrix, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Result<SampleMatrix> {
        self.check_dim(points.d())?;
        let d = points.d();
        let mut out = vec![0.0; points.as_slice().len()];
        out.par_chunks_mut(d)
            .zip(points.as_slice().par_chunks(d))
            .for_each(|(o, x)| f(x, o));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("map produced a non-finite value".into()));
        }
        SampleMatrix::new(out, d, points.label())
    }

    fn apply_stack(&self, class: usize, x: &[f64], out: &mut [f64], inverse: bool) {
        let mut cur = x.to_vec();
        let mut run = |layer: &Layer| {
            let m = layer.class_map(class);
            if inverse {
                m.inverse_into(&cur, out);
            } else {
                m.forward_into(&cur, out);
            }
            cur.copy_from_slice(out);
        };
        if inverse {
            self.layers.iter().rev().for_each(&mut run);
        } else {
            self.layers.iter().for_each(&mut run);
        }
        out.copy_from_slice(&cur);
    }

    /// Applies `T_class` to every row.
    pub fn transform(&self, class: usize, points: &SampleMatrix) -> Result<SampleMatrix> {
        self.check_class(class)?;
        self.map_rows(points, |x, o| self.apply_stack(class, x, o, false))
    }

    /// Applies `T_class^{-1}` to every row.
    pub fn inverse_transform(&self, class: usize, points: &SampleMatrix) -> Result<SampleMatrix> {
        self.check_class(class)?;
        self.map_rows(points, |x, o| self.apply_stack(class, x, o, true))
    }

    /// `T_to^{-1}(T_from(x))` for every row; the identity when `from == to`.
    pub fn flip(&self, from: usize, to: usize, points: &SampleMatrix) -> Result<SampleMatrix> {
        self.check_class(from)?;
        self.check_class(to)?;
        if from == to {
            self.check_dim(points.d())?;
            return Ok(points.clone());
        }
        let label = self.labels[to];
        self.map_rows(points, |x, o| {
            let mut z = vec![0.0; x.len()];
            self.apply_stack(from, x, &mut z, false);
            self.apply_stack(to, &z, o, true);
        })
        .map(|m| m.with_label(label))
    }

    /// Every class pushed through its own map.
    pub fn transform_dataset(&self, dataset: &LabeledDataset) -> Result<LabeledDataset> {
        self.check_classes(dataset)?;
        let classes =
            dataset.classes().iter().enumerate().map(|(j, c)| self.transform(j, c)).collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(classes)
    }

    pub(crate) fn check_classes(&self, dataset: &LabeledDataset) -> Result<()> {
        self.check_dim(dataset.d())?;
        if dataset.labels() != self.labels {
            return Err(Error::invalid(format!(
                "dataset labels {:?} do not match model labels {:?}",
                dataset.labels(),
                self.labels
            )));
        }
        Ok(())
    }

    /// Writes the model as JSON.
    pub fn save<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer(sink, &self.to_json())?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let layers: Vec<Value> = self.layers.iter().map(layer_to_json).collect();
        serde_json::json!({
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "d": self.d,
            "k": self.k(),
            "weights": self.weights,
            "labels": self.labels,
            "metadata": { "seed": self.seed, "schedule": self.schedule },
            "layers": layers,
        })
    }

    /// Reads a model written by [`FlowModel::save`].
    pub fn load<R: Read>(source: R) -> Result<Self> {
        let value: Value = serde_json::from_reader(source)?;
        Self::from_json(value)
    }

    pub fn from_json(mut value: Value) -> Result<Self> {
        if value.get("format").and_then(Value::as_str) != Some(FORMAT_NAME) {
            return Err(Error::invalid("not a baryflow model file"));
        }
        let version = value.get("version").and_then(Value::as_u64).ok_or_else(|| Error::invalid("missing version"))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::VersionMismatch { found: u32::try_from(version).unwrap_or(u32::MAX), supported: FORMAT_VERSION });
        }
        let layers = match value.get_mut("layers").map(Value::take) {
            Some(Value::Array(items)) => items,
            _ => return Err(Error::invalid("missing layer list")),
        };
        let head: Header = serde_json::from_value(value)?;
        if head.labels.len() != head.k {
            return Err(Error::invalid("label count does not match k"));
        }
        let layers = layers
            .into_iter()
            .enumerate()
            .map(|(index, v)| layer_from_json(v, head.d, head.k).map_err(|e| Error::Layer { index, source: Box::new(e) }))
            .collect::<Result<Vec<_>>>()?;
        if layers.len() != head.metadata.schedule.len() {
            return Err(Error::invalid("layer count does not match the schedule"));
        }
        let mut model = Self::identity(head.d, head.labels, head.weights)?;
        model.seed = head.metadata.seed;
        model.schedule = head.metadata.schedule;
        model.layers = layers;
        Ok(model)
    }
}

#[derive(Deserialize)]
struct Header {
    d: usize,
    k: usize,
    weights: WeightVector,
    labels: Vec<i64>,
    metadata: Metadata,
}

#[derive(Deserialize)]
struct Metadata {
    seed: u64,
    schedule: Vec<LayerConfig>,
}

fn layer_to_json(layer: &Layer) -> Value {
    let (kind, mut body) = match layer {
        Layer::Gaussian(l) => {
            let per_class: Vec<AffineMapRecord> = l.maps.iter().map(AffineMapRecord::from).collect();
            ("gaussian", serde_json::json!({ "per_class": per_class }))
        }
        Layer::Nb(l) => ("nb", serde_json::to_value(NbRecord::from(l)).expect("nb record serializes")),
        Layer::Tree(l) => ("tree", serde_json::to_value(l).expect("tree layer serializes")),
    };
    body.as_object_mut().expect("layer body is an object").insert("kind".into(), kind.into());
    body
}

fn layer_from_json(mut v: Value, d: usize, k: usize) -> Result<Layer> {
    let kind = match v.as_object_mut().and_then(|o| o.remove("kind")) {
        Some(Value::String(s)) => s,
        _ => return Err(Error::invalid("layer without a kind tag")),
    };
    let layer = match kind.as_str() {
        "gaussian" => {
            #[derive(Deserialize)]
            struct Body {
                per_class: Vec<AffineMapRecord>,
            }
            let body: Body = serde_json::from_value(v)?;
            let maps = body.per_class.into_iter().map(AffineMap::try_from).collect::<Result<Vec<_>>>()?;
            Layer::Gaussian(GaussianLayer { maps })
        }
        "nb" => Layer::Nb(NbLayer::try_from(serde_json::from_value::<NbRecord>(v)?)?),
        "tree" => {
            let t: TreeLayer = serde_json::from_value(v)?;
            t.validate()?;
            Layer::Tree(t)
        }
        other => return Err(Error::UnsupportedLayer(other.to_string())),
    };
    if layer.k() != k {
        return Err(Error::invalid(format!("layer has {} classes, model has {k}", layer.k())));
    }
    let dim = layer.class_map(0).dim();
    if dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: dim });
    }
    Ok(layer)
}

/// Moves every class of `dataset` through its map of `layer`.
pub fn push_layer(layer: &Layer, dataset: &LabeledDataset) -> Result<LabeledDataset> {
    let classes = dataset
        .classes()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let map = layer.class_map(j);
            let d = c.d();
            let mut out = vec![0.0; c.as_slice().len()];
            out.par_chunks_mut(d)
                .zip(c.as_slice().par_chunks(d))
                .for_each(|(o, x)| map.forward_into(x, o));
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Degenerate("map produced a non-finite value".into()));
            }
            SampleMatrix::new(out, d, c.label())
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(classes)
}

/// Fits a model with [`fit_flow_with`] and no observer.
pub fn fit_flow(dataset: &LabeledDataset, weights: &WeightVector, schedule: &[LayerConfig], seed: u64) -> Result<FlowModel> {
    fit_flow_with(dataset, weights, schedule, seed, |_, _, _| Ok(()))
}

/// Fits the layers of `schedule` one after another. After layer `l`
/// (1-based) is fitted and the working samples are moved through it,
/// `observer(l, model_so_far, working_samples)` is called.
pub fn fit_flow_with<F>(
    dataset: &LabeledDataset,
    weights: &WeightVector,
    schedule: &[LayerConfig],
    seed: u64,
    mut observer: F,
) -> Result<FlowModel>
where
    F: FnMut(usize, &FlowModel, &LabeledDataset) -> Result<()>,
{
    if schedule.is_empty() {
        return Err(Error::invalid("the layer schedule is empty"));
    }
    weights.check_len(dataset.k())?;
    let mut model = FlowModel::identity(dataset.d(), dataset.labels(), weights.clone())?;
    model.seed = seed;
    let mut work = dataset.clone();
    for (index, cfg) in schedule.iter().enumerate() {
        let wrap = |e: Error| Error::Layer { index, source: Box::new(e) };
        let layer = Layer::fit(&work, weights, cfg, seed, index).map_err(wrap)?;
        work = push_layer(&layer, &work).map_err(wrap)?;
        model.schedule.push(*cfg);
        model.layers.push(layer);
        observer(index + 1, &model, &work)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_config_json_shape() {
        let cfg = LayerConfig::Nb(NbConfig { m: Some(2), ..NbConfig::default() });
        let v = serde_json::to_value(cfg).unwrap();
        assert_eq!(v["kind"], "nb");
        assert_eq!(v["m"], 2);
        let back: LayerConfig = serde_json::from_value(serde_json::json!({"kind": "gaussian"})).unwrap();
        assert_eq!(back, LayerConfig::Gaussian(GaussianConfig::default()));
    }

    #[test]
    fn identity_model_and_errors() {
        let m = FlowModel::identity(2, vec![3, 7], WeightVector::uniform(2)).unwrap();
        let pts = SampleMatrix::from_rows(&[vec![1.0, -2.0]], 3).unwrap();
        assert_eq!(m.transform(0, &pts).unwrap(), pts);
        assert_eq!(m.inverse_transform(1, &pts).unwrap().as_slice(), pts.as_slice());
        assert!(matches!(m.transform(2, &pts), Err(Error::ClassOutOfRange { index: 2, k: 2 })));
        assert_eq!(m.class_index(7).unwrap(), 1);
        assert!(matches!(m.class_index(5), Err(Error::UnknownLabel(5))));
        let bad = SampleMatrix::from_rows(&[vec![1.0]], 3).unwrap();
        assert!(matches!(m.transform(0, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn unsupported_kind_and_version() {
        let m = FlowModel::identity(1, vec![0, 1], WeightVector::uniform(2)).unwrap();
        let mut v = m.to_json();
        v["layers"] = serde_json::json!([{"kind": "spline"}]);
        v["metadata"]["schedule"] = serde_json::json!([{"kind": "gaussian"}]);
        match FlowModel::from_json(v) {
            Err(Error::Layer { index: 0, source }) => assert!(matches!(*source, Error::UnsupportedLayer(ref k) if k == "spline")),
            other => panic!("unexpected {other:?}"),
        }
        let mut v = m.to_json();
        v["version"] = 99.into();
        assert!(matches!(FlowModel::from_json(v), Err(Error::VersionMismatch { found: 99, .. })));
    }

    #[test]
    fn truncated_file_reports_position() {
        let m = FlowModel::identity(1, vec![0, 1], WeightVector::uniform(2)).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        buf.truncate(buf.len() / 2);
        match FlowModel::load(buf.as_slice()) {
            Err(Error::Parse { line, column, .. }) => assert!(line >= 1 && column > 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
