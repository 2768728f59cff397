//! Sub-goal selection: nearest neighbors of the live state, filtered by how well
//! their demonstration history matches the live history, ranked by reachability.

use crate::dataset::{BatchRef, DemoDataset, RetrievalBatch};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::reachability::{StateGraph, ValueTable};
use crate::similarity::{knn, DEFAULT_K};
use crate::transport::{candidate_distances, GroundMetric, ThresholdRule};
use alloc::vec::Vec;
use core::cmp::Ordering;

pub const DEFAULT_HISTORY_CAP: usize = 50;

/// States visited by the robot so far, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveTrajectory {
    steps: Vec<FeatureVector>,
}

impl LiveTrajectory {
    pub fn new(steps: Vec<FeatureVector>) -> Result<Self> {
        let first = steps.first().ok_or(Error::EmptyLive)?;
        for s in &steps[1..] {
            first.check_dim(s)?;
        }
        Ok(Self { steps })
    }

    pub fn start(first: FeatureVector) -> Self {
        Self {
            steps: alloc::vec![first],
        }
    }

    pub fn push(&mut self, s: FeatureVector) -> Result<()> {
        self.steps[0].check_dim(&s)?;
        self.steps.push(s);
        Ok(())
    }

    pub fn steps(&self) -> &[FeatureVector] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> &FeatureVector {
        &self.steps[self.steps.len() - 1]
    }

    pub fn dim(&self) -> usize {
        self.steps[0].dim()
    }

    /// The most recent `cap` states.
    pub fn recent(&self, cap: usize) -> &[FeatureVector] {
        let cap = cap.max(1);
        &self.steps[self.steps.len().saturating_sub(cap)..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SubgoalParams {
    pub k: usize,
    pub threshold: ThresholdRule,
    pub metric: GroundMetric,
    pub history_cap: usize,
    /// Also exclude candidates the live node cannot reach.
    pub require_reachable: bool,
}

impl Default for SubgoalParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            threshold: ThresholdRule::default(),
            metric: GroundMetric::default(),
            history_cap: DEFAULT_HISTORY_CAP,
            require_reachable: false,
        }
    }
}

impl SubgoalParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if self.history_cap == 0 {
            return Err(Error::InvalidParameter("history_cap must be >= 1".into()));
        }
        self.threshold.validate()
    }
}

/// Scores of one nearest-neighbor candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateAudit {
    pub entry: BatchRef,
    pub similarity: f64,
    pub distance: f64,
    pub value: f64,
    pub node: usize,
    /// Passed the trajectory filter.
    pub filtered: bool,
    /// Resolves to the live state's own graph node, or is unreachable from it
    /// when reachability is required.
    pub excluded: bool,
}

impl CandidateAudit {
    pub fn admissible(&self) -> bool {
        self.filtered && !self.excluded
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgoalDecision {
    pub chosen: BatchRef,
    pub candidates: Vec<CandidateAudit>,
    pub threshold: f64,
    pub live_node: usize,
    pub fallback_used: bool,
}

impl SubgoalDecision {
    pub fn chosen_audit(&self) -> &CandidateAudit {
        self.candidates
            .iter()
            .find(|c| c.entry == self.chosen)
            .expect("chosen entry is always audited")
    }

    /// Candidates a value-weighted policy should aggregate: the admissible set,
    /// or every candidate when the selection fell back.
    pub fn policy_candidates(&self) -> Vec<CandidateAudit> {
        if self.fallback_used {
            self.candidates.clone()
        } else {
            self.candidates
                .iter()
                .copied()
                .filter(CandidateAudit::admissible)
                .collect()
        }
    }
}

/// Ranking used for the argmax: value, then similarity, then lower reference.
pub fn preference(a: &CandidateAudit, b: &CandidateAudit) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then(b.similarity.total_cmp(&a.similarity))
        .then(a.entry.cmp(&b.entry))
}

pub fn select_subgoal(
    live: &LiveTrajectory,
    batch: &RetrievalBatch,
    dataset: &DemoDataset,
    graph: &StateGraph,
    table: &ValueTable,
    params: &SubgoalParams,
) -> Result<SubgoalDecision> {
    params.validate()?;
    if table.len() != graph.len() {
        return Err(Error::InvalidParameter("value table does not match graph".into()));
    }
    let cands = knn(live.last(), batch, params.k)?;
    let recent = live.recent(params.history_cap);
    let distances = candidate_distances(&cands, recent, dataset, params.metric)?;
    let threshold = params.threshold.resolve(&distances);
    let live_node = graph.nearest_node(live.last().as_slice())?;
    let floor = table.unreachable_value();
    let mut audit = Vec::with_capacity(cands.neighbors.len());
    for (n, &d) in cands.neighbors.iter().zip(&distances) {
        let node = match graph.node_of(n.entry) {
            Some(node) => node,
            None => graph.nearest_node(batch.feature(n.index))?,
        };
        let value = table.get(live_node, node);
        audit.push(CandidateAudit {
            entry: n.entry,
            similarity: n.similarity,
            distance: d,
            value,
            node,
            filtered: d <= threshold,
            excluded: node == live_node || (params.require_reachable && value <= floor),
        });
    }
    let best = audit.iter().filter(|c| c.admissible()).min_by(|a, b| preference(a, b));
    let (chosen, fallback_used) = match best {
        Some(c) => (c.entry, false),
        None => (cands.neighbors[0].entry, true),
    };
    Ok(SubgoalDecision {
        chosen,
        candidates: audit,
        threshold,
        live_node,
        fallback_used,
    })
}
