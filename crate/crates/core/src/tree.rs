//! Shared-tree layer.
//!
//! All classes share one axis-aligned partition of the unit hypercube, grown
//! greedily with Gini splits on the class labels. Each class gets a
//! piecewise-constant density on the leaves. The class maps are composites of
//! node-local 1D maps: every internal node poses a 2-bin histogram problem
//! along its split dimension (mass left vs right of the threshold), solved
//! exactly by the histogram barycenter. Nodes are processed deepest first and
//! each node map acts only on points inside the node's box, which it maps
//! onto itself.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, WeightVector};
use crate::error::{Error, Result};
use crate::map::InvertibleMap;
use crate::univariate::{histogram_barycenter, normal_cdf, normal_quantile, Histogram1D, Level, PiecewiseLinearMap};

/// Clip range applied before the inverse normal CDF.
pub const CUBE_CLIP: f64 = 1e-12;

/// Coordinatewise standard normal CDF, mapping `R^d` into the unit cube.
pub fn hypercube_preprocess(x: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = normal_cdf(v).value();
    }
}

/// Coordinatewise inverse standard normal CDF, clipping to `[CUBE_CLIP, 1 - CUBE_CLIP]`.
pub fn hypercube_postprocess(u: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(u) {
        *o = normal_quantile(Level::new(v.clamp(CUBE_CLIP, 1.0 - CUBE_CLIP)));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub dim: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

/// A node of a [`SharedTree`]; its box is `[lo, hi)` per coordinate, closed
/// at the upper face of the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub depth: usize,
    pub split: Option<Split>,
}

impl TreeNode {
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&a, &b))| v >= a && (v < b || (b >= 1.0 && v <= b)))
    }
}

/// Binary partition of `[0, 1]^d`. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedTree {
    nodes: Vec<TreeNode>,
}

impl SharedTree {
    /// Single-leaf tree over the unit cube.
    pub fn unit(d: usize) -> Self {
        Self { nodes: vec![TreeNode { lo: vec![0.0; d], hi: vec![1.0; d], depth: 0, split: None }] }
    }

    pub fn d(&self) -> usize {
        self.nodes[0].lo.len()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    /// Splits leaf `node` at `threshold` along `dim`; returns the child indices.
    pub fn split_leaf(&mut self, node: usize, dim: usize, threshold: f64) -> Result<(usize, usize)> {
        let parent = self.nodes.get(node).ok_or_else(|| Error::invalid(format!("no node {node}")))?;
        if parent.split.is_some() {
            return Err(Error::invalid(format!("node {node} is already split")));
        }
        if dim >= parent.lo.len() {
            return Err(Error::DimensionMismatch { expected: parent.lo.len(), got: dim + 1 });
        }
        if !(threshold > parent.lo[dim] && threshold < parent.hi[dim]) {
            return Err(Error::invalid(format!("threshold {threshold} outside the node interval")));
        }
        let mut left = parent.clone();
        left.depth += 1;
        let mut right = left.clone();
        left.hi[dim] = threshold;
        right.lo[dim] = threshold;
        let (l, r) = (self.nodes.len(), self.nodes.len() + 1);
        self.nodes.push(left);
        self.nodes.push(right);
        self.nodes[node].split = Some(Split { dim, threshold, left: l, right: r });
        Ok((l, r))
    }

    /// Leaf indices in creation order.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].split.is_none()).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    /// Leaf reached by descending with `x[dim] < threshold` going left.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.dim] < s.threshold { s.left } else { s.right };
        }
        i
    }

    /// Internal nodes, deepest first (creation order within a depth).
    pub fn internal_deepest_first(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].split.is_some()).collect();
        idx.sort_by(|&a, &b| self.nodes[b].depth.cmp(&self.nodes[a].depth).then(a.cmp(&b)));
        idx
    }

    fn validate(&self) -> Result<()> {
        let d = self.d();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.lo.len() != d || n.hi.len() != d {
                return Err(Error::invalid(format!("tree node {i} has a box of the wrong dimension")));
            }
            if let Some(s) = n.split {
                if s.dim >= d || s.left >= self.nodes.len() || s.right >= self.nodes.len() || s.left <= i || s.right <= i {
                    return Err(Error::invalid(format!("tree node {i} has an invalid split")));
                }
            }
        }
        Ok(())
    }
}

fn clamp_unit(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// `n * Gini` of a count vector: `n - sum c^2 / n`.
fn weighted_gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    dim: usize,
    threshold: f64,
}

fn best_split(points: &[(Vec<f64>, usize)], idx: &[usize], k: usize, min_leaf: usize) -> Option<Candidate> {
    let n = idx.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let mut total = vec![0usize; k];
    for &i in idx {
        total[points[i].1] += 1;
    }
    let parent = weighted_gini(&total);
    let d = points[idx[0]].0.len();
    let mut best: Option<Candidate> = None;
    let mut order = idx.to_vec();
    let mut left = vec![0usize; k];
    let mut right = vec![0usize; k];
    for dim in 0..d {
        order.sort_by(|&a, &b| points[a].0[dim].total_cmp(&points[b].0[dim]));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&total);
        for pos in 0..n - 1 {
            let (x, c) = (&points[order[pos]].0, points[order[pos]].1);
            left[c] += 1;
            right[c] -= 1;
            let (v, next) = (x[dim], points[order[pos + 1]].0[dim]);
            if next <= v || pos + 1 < min_leaf || n - pos - 1 < min_leaf {
                continue;
            }
            let gain = parent - weighted_gini(&left) - weighted_gini(&right);
            let threshold = 0.5 * (v + next);
            if gain > best.map_or(1e-9 * n as f64, |b| b.gain) {
                best = Some(Candidate { gain, dim, threshold });
            }
        }
    }
    best
}

/// Grows a shared tree best-first on the Gini impurity decrease of the class
/// labels. Points are clamped to the unit cube. Ties go to the lowest
/// dimension, then the lowest threshold.
pub fn fit_shared_tree(dataset: &LabeledDataset, max_leaf_nodes: usize, min_samples_leaf: usize) -> Result<SharedTree> {
    if max_leaf_nodes == 0 {
        return Err(Error::invalid("max_leaf_nodes must be at least 1"));
    }
    let k = dataset.k();
    let points: Vec<(Vec<f64>, usize)> = dataset
        .classes()
        .iter()
        .enumerate()
        .flat_map(|(j, c)| c.rows().map(move |r| (clamp_unit(r), j)))
        .collect();
    let mut tree = SharedTree::unit(dataset.d());
    let mut members: Vec<Vec<usize>> = vec![(0..points.len()).collect()];
    let mut candidates = vec![best_split(&points, &members[0], k, min_samples_leaf)];
    while tree.leaf_count() < max_leaf_nodes {
        let pick = (0..candidates.len())
            .filter_map(|i| candidates[i].map(|c| (i, c)))
            .fold(None::<(usize, Candidate)>, |acc, (i, c)| match acc {
                Some((_, b)) if b.gain >= c.gain => acc,
                _ => Some((i, c)),
            });
        let Some((node, c)) = pick else { break };
        let (l, r) = tree.split_leaf(node, c.dim, c.threshold)?;
        let (li, ri): (Vec<usize>, Vec<usize>) =
            members[node].iter().partition(|&&i| points[i].0[c.dim] < c.threshold);
        candidates[node] = None;
        members[node].clear();
        for (child, idx) in [(l, li), (r, ri)] {
            debug_assert_eq!(child, members.len());
            candidates.push(best_split(&points, &idx, k, min_samples_leaf));
            members.push(idx);
        }
    }
    Ok(tree)
}

/// Per-class constant densities on the leaves of a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafDensities {
    /// Leaf node indices, in the order of the columns of `c`.
    pub leaves: Vec<usize>,
    /// `c[j][l]`: density of class `j` on leaf `leaves[l]`.
    pub c: Vec<Vec<f64>>,
}

impl LeafDensities {
    /// Mass of class `j` on every node (sum over descendant leaves).
    pub fn node_masses(&self, tree: &SharedTree, j: usize) -> Vec<f64> {
        let mut mass = vec![0.0; tree.nodes().len()];
        for (l, &leaf) in self.leaves.iter().enumerate() {
            mass[leaf] = self.c[j][l] * tree.node(leaf).volume();
        }
        for i in (0..tree.nodes().len()).rev() {
            if let Some(s) = tree.node(i).split {
                mass[i] = mass[s.left] + mass[s.right];
            }
        }
        mass
    }
}

/// Smoothed leaf frequencies `c = (1 - kappa) n_jl / (n_j vol_l) + kappa`.
pub fn estimate_leaf_densities(tree: &SharedTree, dataset: &LabeledDataset, kappa: f64) -> Result<LeafDensities> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid(format!("kappa must lie in [0, 1], got {kappa}")));
    }
    let leaves = tree.leaves();
    let mut slot = vec![usize::MAX; tree.nodes().len()];
    for (l, &leaf) in leaves.iter().enumerate() {
        slot[leaf] = l;
    }
    let c = dataset
        .classes()
        .par_iter()
        .map(|class| {
            let mut counts = vec![0usize; leaves.len()];
            for r in class.rows() {
                counts[slot[tree.leaf_of(&clamp_unit(r))]] += 1;
            }
            if kappa == 0.0 && counts.contains(&0) {
                return Err(Error::Degenerate(format!(
                    "class {} has an empty leaf and kappa is 0",
                    class.label()
                )));
            }
            let n = class.n() as f64;
            Ok(leaves
                .iter()
                .zip(&counts)
                .map(|(&leaf, &cnt)| (1.0 - kappa) * cnt as f64 / (n * tree.node(leaf).volume()) + kappa)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(LeafDensities { leaves, c })
}

/// How node problems weigh the classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeWeighting {
    /// `omega_j ∝ w_j P_j(v)`.
    #[default]
    ClassWeighted,
    /// `omega_j ∝ P_j(v)`.
    MassOnly,
}

/// The 1D problem solved at one internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMap {
    pub node: usize,
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Per-class 2-bin histograms on the node interval.
    pub sources: Vec<Histogram1D>,
    pub bary: Histogram1D,
    pub maps: Vec<PiecewiseLinearMap>,
}

impl NodeMap {
    fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&a, &b))| v >= a && (v < b || (b >= 1.0 && v <= b)))
    }
}

/// Node maps in application order (deepest first). Nodes where every class
/// has the same conditional split, or no class has mass, are omitted.
pub fn fit_tree_monge(
    tree: &SharedTree,
    densities: &LeafDensities,
    weights: &WeightVector,
    weighting: NodeWeighting,
) -> Result<Vec<NodeMap>> {
    let k = densities.c.len();
    weights.check_len(k)?;
    if densities.c.iter().flatten().any(|&c| !(c > 0.0)) {
        return Err(Error::Degenerate("tree maps need strictly positive leaf densities".into()));
    }
    let masses: Vec<Vec<f64>> = (0..k).map(|j| densities.node_masses(tree, j)).collect();
    let mut out = Vec::new();
    for v in tree.internal_deepest_first() {
        let node = tree.node(v);
        let s = node.split.expect("internal node");
        let total: Vec<f64> = masses.iter().map(|m| m[v]).collect();
        if total.iter().all(|&m| m == 0.0) {
            continue;
        }
        let q: Vec<f64> = masses.iter().map(|m| m[s.left] / m[v]).collect();
        if q.iter().all(|&x| x == q[0]) {
            continue;
        }
        let (a, b) = (node.lo[s.dim], node.hi[s.dim]);
        let sources = q
            .iter()
            .map(|&qj| Histogram1D::from_masses(vec![a, s.threshold, b], &[qj, 1.0 - qj]))
            .collect::<Result<Vec<_>>>()?;
        let omega = match weighting {
            NodeWeighting::ClassWeighted => total.iter().zip(weights.as_slice()).map(|(m, w)| m * w).collect(),
            NodeWeighting::MassOnly => total.clone(),
        };
        let omega = WeightVector::normalized(omega)?;
        let bary = histogram_barycenter(&sources, &omega)?;
        let maps = sources
            .iter()
            .map(|h| PiecewiseLinearMap::between_histograms(h, &bary))
            .collect::<Result<Vec<_>>>()?;
        out.push(NodeMap { node: v, dim: s.dim, lo: node.lo.clone(), hi: node.hi.clone(), sources, bary, maps });
    }
    Ok(out)
}

/// Settings of a tree layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_leaf_nodes: usize,
    pub min_samples_leaf: usize,
    pub kappa: f64,
    /// Map data into the unit cube with the normal CDF first.
    pub preprocess: bool,
    pub weighting: NodeWeighting,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_leaf_nodes: 10, min_samples_leaf: 1, kappa: 0.9, preprocess: true, weighting: NodeWeighting::ClassWeighted }
    }
}

/// A fitted tree layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeLayer {
    pub tree: SharedTree,
    pub densities: LeafDensities,
    pub kappa: f64,
    pub preprocess: bool,
    pub weighting: NodeWeighting,
    pub node_maps: Vec<NodeMap>,
}

impl TreeLayer {
    pub fn k(&self) -> usize {
        self.densities.c.len()
    }

    pub fn d(&self) -> usize {
        self.tree.d()
    }

    pub fn is_identity(&self) -> bool {
        self.node_maps.is_empty()
    }

    pub fn class_map(&self, class: usize) -> TreeMongeMap<'_> {
        TreeMongeMap { layer: self, class }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        let k = self.k();
        if self.densities.c.iter().any(|c| c.len() != self.densities.leaves.len())
            || self.node_maps.iter().any(|m| m.maps.len() != k || m.dim >= self.d() || m.lo.len() != self.d())
        {
            return Err(Error::invalid("tree layer record is inconsistent"));
        }
        Ok(())
    }
}

/// Fits tree, leaf densities and node maps on the (preprocessed) samples.
pub fn fit_tree_layer(dataset: &LabeledDataset, weights: &WeightVector, cfg: &TreeConfig) -> Result<TreeLayer> {
    weights.check_len(dataset.k())?;
    let cube = if cfg.preprocess {
        let classes = dataset
            .classes()
            .iter()
            .map(|c| {
                let mut c = c.clone();
                let mut buf = vec![0.0; c.d()];
                for r in c.rows_mut() {
                    hypercube_preprocess(r, &mut buf);
                    r.copy_from_slice(&buf);
                }
                c
            })
            .collect();
        LabeledDataset::new(classes)?
    } else {
        dataset.clone()
    };
    let tree = fit_shared_tree(&cube, cfg.max_leaf_nodes, cfg.min_samples_leaf)?;
    let densities = estimate_leaf_densities(&tree, &cube, cfg.kappa)?;
    let node_maps = fit_tree_monge(&tree, &densities, weights, cfg.weighting)?;
    Ok(TreeLayer { tree, densities, kappa: cfg.kappa, preprocess: cfg.preprocess, weighting: cfg.weighting, node_maps })
}

/// Class `j`'s composite map of a [`TreeLayer`].
#[derive(Debug, Clone, Copy)]
pub struct TreeMongeMap<'a> {
    layer: &'a TreeLayer,
    class: usize,
}

impl TreeMongeMap<'_> {
    /// Forward map inside the unit cube (no pre/post processing).
    pub fn forward_cube(&self, u: &mut [f64]) {
        for m in &self.layer.node_maps {
            if m.contains(u) {
                u[m.dim] = m.maps[self.class].forward(u[m.dim]);
            }
        }
    }

    pub fn inverse_cube(&self, u: &mut [f64]) {
        for m in self.layer.node_maps.iter().rev() {
            if m.contains(u) {
                u[m.dim] = m.maps[self.class].inverse(u[m.dim]);
            }
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64], f: impl Fn(&Self, &mut [f64])) {
        if self.layer.node_maps.is_empty() {
            out.copy_from_slice(x);
            return;
        }
        if self.layer.preprocess {
            let mut u = vec![0.0; x.len()];
            hypercube_preprocess(x, &mut u);
            f(self, &mut u);
            hypercube_postprocess(&u, out);
        } else {
            out.copy_from_slice(x);
            f(self, out);
        }
    }
}

impl InvertibleMap for TreeMongeMap<'_> {
    fn dim(&self) -> usize {
        self.layer.d()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out, Self::forward_cube);
    }

    fn inverse_into(&self, z: &[f64], out: &mut [f64]) {
        self.apply(z, out, Self::inverse_cube);
    }
}
