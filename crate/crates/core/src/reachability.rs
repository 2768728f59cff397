//! Goal-conditioned reachability values over the demonstration transition graph.
//!
//! Steps whose features lie within `merge_eps` of an existing node's member are
//! merged into that node (greedy single linkage in dataset order), so
//! demonstrations that pass through the same state share a node and paths can
//! be stitched across them. With reward `-1` per step before reaching the goal
//! and termination at the goal, the fixed point on this deterministic graph is
//! `V(s, g) = -(1 - gamma^d) / (1 - gamma)` for shortest edge count `d`, and
//! `-1 / (1 - gamma)` when `g` is unreachable.

use crate::dataset::{BatchRef, DemoDataset, TrajId};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::math;
use crate::transport::GroundMetric;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub const DEFAULT_GAMMA: f64 = 0.95;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MERGE_FACTOR: f64 = 0.05;

/// How `merge_eps` is chosen when a graph is built.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MergeRule {
    /// `factor` times the median nearest-neighbor distance among all demo features.
    Auto(f64),
    Fixed(f64),
}

impl Default for MergeRule {
    fn default() -> Self {
        MergeRule::Auto(DEFAULT_MERGE_FACTOR)
    }
}

impl MergeRule {
    pub fn resolve(&self, dataset: &DemoDataset, metric: GroundMetric) -> f64 {
        match *self {
            MergeRule::Fixed(eps) => eps,
            MergeRule::Auto(factor) => factor * median_nn_distance(dataset, metric),
        }
    }
}

/// Median over steps of the distance to the closest other step.
pub fn median_nn_distance(dataset: &DemoDataset, metric: GroundMetric) -> f64 {
    let batch = dataset.flatten();
    let n = batch.len();
    if n < 2 {
        return 0.0;
    }
    let mut nn = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = metric.cost(batch.feature(i), batch.feature(j));
            if d < nn[i] {
                nn[i] = d;
            }
            if d < nn[j] {
                nn[j] = d;
            }
        }
    }
    math::median(&mut nn).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphNode {
    /// Mean of the member features.
    pub representative: Vec<f64>,
    pub members: Vec<BatchRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    nodes: Vec<GraphNode>,
    /// Sorted, de-duplicated successor lists; may contain self loops.
    successors: Vec<Vec<usize>>,
    merge_eps: f64,
    metric: GroundMetric,
    dim: usize,
    /// `(traj_id, offset)` into `step_node` for each trajectory, in id order.
    traj_offsets: Vec<(TrajId, usize)>,
    step_node: Vec<usize>,
}

impl StateGraph {
    /// Reassembles a graph from its parts, checking structural consistency.
    pub fn from_parts(
        nodes: Vec<GraphNode>,
        edges: &[(usize, usize)],
        merge_eps: f64,
        metric: GroundMetric,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let dim = nodes[0].representative.len();
        let mut successors = vec![Vec::new(); nodes.len()];
        for &(a, b) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) out of range")));
            }
            successors[a].push(b);
        }
        for s in &mut successors {
            s.sort_unstable();
            s.dedup();
        }
        let mut refs: Vec<(BatchRef, usize)> = Vec::new();
        for (id, node) in nodes.iter().enumerate() {
            if node.representative.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: node.representative.len(),
                });
            }
            refs.extend(node.members.iter().map(|m| (*m, id)));
        }
        refs.sort();
        let mut traj_offsets = Vec::new();
        let mut step_node = Vec::with_capacity(refs.len());
        for (i, (r, id)) in refs.iter().enumerate() {
            if i == 0 || refs[i - 1].0.traj_id != r.traj_id {
                if r.t != 1 {
                    return Err(Error::NonConsecutive {
                        traj_id: r.traj_id,
                        expected: 1,
                        found: r.t,
                    });
                }
                traj_offsets.push((r.traj_id, i));
            } else if refs[i - 1].0.t + 1 != r.t {
                return Err(Error::NonConsecutive {
                    traj_id: r.traj_id,
                    expected: refs[i - 1].0.t + 1,
                    found: r.t,
                });
            }
            step_node.push(*id);
        }
        Ok(Self {
            nodes,
            successors,
            merge_eps,
            metric,
            dim,
            traj_offsets,
            step_node,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.successors[node]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.successors
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.successors.iter().map(Vec::len).sum()
    }

    pub fn merge_eps(&self) -> f64 {
        self.merge_eps
    }

    pub fn metric(&self) -> GroundMetric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Node holding the demonstration step `r`.
    pub fn node_of(&self, r: BatchRef) -> Option<usize> {
        let i = self.traj_offsets.binary_search_by_key(&r.traj_id, |(id, _)| *id).ok()?;
        let start = self.traj_offsets[i].1;
        let end = self.traj_offsets.get(i + 1).map_or(self.step_node.len(), |x| x.1);
        if r.t == 0 || start + r.t as usize > end {
            return None;
        }
        Some(self.step_node[start + r.t as usize - 1])
    }

    /// Closest node representative to `x`; ties go to the lower node id.
    pub fn nearest_node(&self, x: &[f64]) -> Result<usize> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = self.metric.cost(x, &n.representative);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(best)
    }
}

/// Builds the merged transition graph of `dataset`.
pub fn build_graph(dataset: &DemoDataset, merge_eps: f64, metric: GroundMetric) -> Result<StateGraph> {
    if merge_eps.is_nan() || merge_eps < 0.0 {
        return Err(Error::InvalidParameter(format!("merge_eps {merge_eps} must be >= 0")));
    }
    let batch = dataset.flatten();
    let n = batch.len();
    let dim = batch.dim();
    let mut step_node = vec![0usize; n];
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut members: Vec<Vec<BatchRef>> = Vec::new();
    for i in 0..n {
        let fi = batch.feature(i);
        let mut target = usize::MAX;
        for j in 0..i {
            if step_node[j] < target && metric.cost(fi, batch.feature(j)) <= merge_eps {
                target = step_node[j];
            }
        }
        if target == usize::MAX {
            target = sums.len();
            sums.push(vec![0.0; dim]);
            members.push(Vec::new());
        }
        step_node[i] = target;
        for (s, v) in sums[target].iter_mut().zip(fi) {
            *s += v;
        }
        members[target].push(batch.entry(i));
    }
    let nodes: Vec<GraphNode> = sums
        .into_iter()
        .zip(members)
        .map(|(sum, members)| {
            let k = members.len() as f64;
            GraphNode {
                representative: sum.into_iter().map(|s| s / k).collect(),
                members,
            }
        })
        .collect();
    let mut edges = Vec::new();
    for i in 1..n {
        let (a, b) = (batch.entry(i - 1), batch.entry(i));
        if a.traj_id == b.traj_id {
            edges.push((step_node[i - 1], step_node[i]));
        }
    }
    StateGraph::from_parts(nodes, &edges, merge_eps, metric)
}

/// Dense `V(s, g)` table, rows indexed by state node, columns by goal node.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    gamma: f64,
    n: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn from_parts(gamma: f64, n: usize, values: Vec<f64>) -> Result<Self> {
        check_gamma(gamma)?;
        if values.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "value matrix has {} entries, expected {}",
                values.len(),
                n * n
            )));
        }
        Ok(Self { gamma, n, values })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, s: usize, g: usize) -> f64 {
        self.values[s * self.n + g]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n..(s + 1) * self.n]
    }

    pub fn unreachable_value(&self) -> f64 {
        unreachable_value(self.gamma)
    }
}

pub fn unreachable_value(gamma: f64) -> f64 {
    -1.0 / (1.0 - gamma)
}

/// Value of a goal `d` edges away.
pub fn closed_form(gamma: f64, d: u32) -> f64 {
    -(1.0 - math::powi(gamma, d)) / (1.0 - gamma)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} must lie in (0, 1)")));
    }
    Ok(())
}

/// Asynchronous Bellman backups per goal, swept outward along predecessor edges.
///
/// Each goal starts from the unreachable fixed point everywhere except the goal
/// itself; a node is re-queued only when its backup improves it by more than `tol`.
pub fn value_iteration(graph: &StateGraph, gamma: f64, tol: f64) -> Result<ValueTable> {
    check_gamma(gamma)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol {tol} must be > 0")));
    }
    let n = graph.len();
    let mut preds = vec![Vec::new(); n];
    for (a, b) in graph.edges() {
        if a != b {
            preds[b].push(a);
        }
    }
    let floor = unreachable_value(gamma);
    let mut values = vec![floor; n * n];
    let mut col = vec![floor; n];
    let mut queued = vec![false; n];
    let mut queue = VecDeque::new();
    for g in 0..n {
        col.fill(floor);
        col[g] = 0.0;
        queue.clear();
        for &p in &preds[g] {
            if !queued[p] {
                queued[p] = true;
                queue.push_back(p);
            }
        }
        while let Some(s) = queue.pop_front() {
            queued[s] = false;
            if s == g {
                continue;
            }
            let best = graph.successors[s]
                .iter()
                .filter(|&&x| x != s)
                .map(|&x| col[x])
                .fold(f64::NEG_INFINITY, f64::max);
            let backup = -1.0 + gamma * best;
            if backup > col[s] + tol {
                col[s] = backup;
                for &p in &preds[s] {
                    if !queued[p] {
                        queued[p] = true;
                        queue.push_back(p);
                    }
                }
            }
        }
        for s in 0..n {
            values[s * n + g] = col[s];
        }
    }
    Ok(ValueTable { gamma, n, values })
}

/// `V(s, g)` for arbitrary features, via their nearest graph nodes.
pub fn value(s: &FeatureVector, g: &FeatureVector, graph: &StateGraph, table: &ValueTable) -> Result<f64> {
    let a = graph.nearest_node(s.as_slice())?;
    let b = graph.nearest_node(g.as_slice())?;
    Ok(table.get(a, b))
}
