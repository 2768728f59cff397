//! Demonstration data: steps, trajectories, the dataset, and the flat retrieval batch.

use crate::action::ActionId;
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Number of discrete actions every dataset is recorded against.
pub const ACTION_COUNT: usize = ActionId::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct TrajId(pub u32);

impl fmt::Display for TrajId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One recorded `(state feature, action taken in that state)` pair. `t` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub traj_id: TrajId,
    pub t: u32,
    pub feature: FeatureVector,
    pub action: ActionId,
}

impl AsRef<[f64]> for Step {
    fn as_ref(&self) -> &[f64] {
        self.feature.as_slice()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoTrajectory {
    traj_id: TrajId,
    task_tag: String,
    steps: Vec<Step>,
}

impl DemoTrajectory {
    /// Validates that steps are non-empty, carry `traj_id`, and run `1..=n`.
    pub fn new(traj_id: TrajId, task_tag: impl Into<String>, steps: Vec<Step>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyTrajectory(traj_id));
        }
        let dim = steps[0].feature.dim();
        for (i, s) in steps.iter().enumerate() {
            if s.traj_id != traj_id {
                return Err(Error::MixedTrajId {
                    traj_id,
                    found: s.traj_id,
                });
            }
            let expected = i as u32 + 1;
            if s.t != expected {
                return Err(Error::NonConsecutive {
                    traj_id,
                    expected,
                    found: s.t,
                });
            }
            if s.feature.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.feature.dim(),
                });
            }
        }
        Ok(Self {
            traj_id,
            task_tag: task_tag.into(),
            steps,
        })
    }

    /// Builds a trajectory from parallel feature and action lists, numbering steps from 1.
    pub fn from_pairs(
        traj_id: TrajId,
        task_tag: impl Into<String>,
        pairs: impl IntoIterator<Item = (FeatureVector, ActionId)>,
    ) -> Result<Self> {
        let steps = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (feature, action))| Step {
                traj_id,
                t: i as u32 + 1,
                feature,
                action,
            })
            .collect();
        Self::new(traj_id, task_tag, steps)
    }

    pub fn traj_id(&self) -> TrajId {
        self.traj_id
    }

    pub fn task_tag(&self) -> &str {
        &self.task_tag
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.steps[0].feature.dim()
    }

    /// The step with 1-based timestep `t`.
    pub fn step(&self, t: u32) -> Option<&Step> {
        if t == 0 {
            return None;
        }
        self.steps.get(t as usize - 1)
    }

    /// Steps `1..=t`, the expert prefix terminated at `t`.
    pub fn prefix_steps(&self, t: u32) -> Option<&[Step]> {
        if t == 0 || t as usize > self.steps.len() {
            return None;
        }
        Some(&self.steps[..t as usize])
    }
}

/// A validated expert dataset. Trajectories are kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    trajectories: Vec<DemoTrajectory>,
    feature_dim: usize,
    /// Free-form provenance, e.g. the observation lift seed. Persisted in file headers.
    pub meta: BTreeMap<String, String>,
}

impl DemoDataset {
    pub fn new(mut trajectories: Vec<DemoTrajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::EmptyDataset);
        }
        trajectories.sort_by_key(|t| t.traj_id);
        for w in trajectories.windows(2) {
            if w[0].traj_id == w[1].traj_id {
                return Err(Error::DuplicateTrajId(w[0].traj_id));
            }
        }
        let feature_dim = trajectories[0].feature_dim();
        for t in &trajectories {
            if t.feature_dim() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    found: t.feature_dim(),
                });
            }
        }
        Ok(Self {
            trajectories,
            feature_dim,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn trajectories(&self) -> &[DemoTrajectory] {
        &self.trajectories
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(DemoTrajectory::len).sum()
    }

    pub fn trajectory(&self, id: TrajId) -> Option<&DemoTrajectory> {
        self.trajectories
            .binary_search_by_key(&id, |t| t.traj_id)
            .ok()
            .map(|i| &self.trajectories[i])
    }

    pub fn step(&self, r: BatchRef) -> Result<&Step> {
        self.trajectory(r.traj_id)
            .and_then(|t| t.step(r.t))
            .ok_or(Error::DanglingReference {
                traj_id: r.traj_id,
                t: r.t,
            })
    }

    /// Keeps the first `n` trajectories in id order.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let mut out = Self::new(self.trajectories.iter().take(n).cloned().collect())?;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Lays every step out for dense scanning, ordered by `(traj_id, t)`.
    pub fn flatten(&self) -> RetrievalBatch {
        let n = self.total_steps();
        let d = self.feature_dim;
        let mut entries = Vec::with_capacity(n);
        let mut features = Vec::with_capacity(n * d);
        let mut norms = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        for traj in &self.trajectories {
            for s in &traj.steps {
                entries.push(BatchRef {
                    traj_id: s.traj_id,
                    t: s.t,
                });
                features.extend_from_slice(s.feature.as_slice());
                norms.push(s.feature.norm());
                actions.push(s.action);
            }
        }
        RetrievalBatch {
            entries,
            features,
            norms,
            actions,
            dim: d,
        }
    }
}

/// Reference to one step, `(traj_id, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatchRef {
    pub traj_id: TrajId,
    pub t: u32,
}

impl fmt::Display for BatchRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.traj_id, self.t)
    }
}

/// Every demonstration step in one contiguous row-major feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalBatch {
    entries: Vec<BatchRef>,
    features: Vec<f64>,
    norms: Vec<f64>,
    actions: Vec<ActionId>,
    dim: usize,
}

impl RetrievalBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[BatchRef] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> BatchRef {
        self.entries[i]
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn action(&self, i: usize) -> ActionId {
        self.actions[i]
    }

    /// Position of `r` in the batch.
    pub fn index_of(&self, r: BatchRef) -> Option<usize> {
        self.entries.binary_search(&r).ok()
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    pub fn traj(id: u32, feats: &[&[f64]], actions: &[ActionId]) -> DemoTrajectory {
        DemoTrajectory::from_pairs(TrajId(id), "test", feats.iter().zip(actions).map(|(f, a)| (fv(f), *a))).unwrap()
    }

    pub fn random_dataset(seed: u64, trajs: usize, max_len: usize, dim: usize) -> DemoDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![];
        for id in 0..trajs {
            let len = rng.gen_range(1..=max_len);
            let pairs = (0..len).map(|_| {
                let f: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = ActionId::from_index(rng.gen_range(0..14)).unwrap();
                (FeatureVector::new(f).unwrap(), a)
            });
            let pairs: Vec<_> = pairs.collect();
            out.push(DemoTrajectory::from_pairs(TrajId(id as u32), format!("task{}", id % 2), pairs).unwrap());
        }
        DemoDataset::new(out).unwrap()
    }
}
