//! Environments driven by the 14-action interface, and expert demonstration collection.

pub mod fork;
pub mod surrogate;

use crate::action::ActionId;
use crate::dataset::{DemoDataset, DemoTrajectory, TrajId};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use alloc::format;
use alloc::vec::Vec;

pub const DEFAULT_MAX_STEPS: u32 = 500;

/// A deterministic episodic environment with a scripted expert.
pub trait Environment {
    type State: Clone + core::fmt::Debug;

    fn task_tag(&self) -> &str;
    fn reset(&self, seed: u64) -> Result<Self::State>;
    fn step(&self, state: &Self::State, action: ActionId) -> Self::State;
    fn observe(&self, state: &Self::State) -> FeatureVector;
    fn success(&self, state: &Self::State) -> bool;
    /// Expert action, or `None` once the task is done.
    fn expert(&self, state: &Self::State) -> Result<Option<ActionId>>;

    /// Key/value pairs describing the observation model, stored with generated datasets.
    fn dataset_meta(&self) -> Vec<(alloc::string::String, alloc::string::String)> {
        Vec::new()
    }
}

/// Stateless 64-bit mixer (splitmix64 finalizer) for deriving sub-seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Reset seed of the `index`-th demonstration generated from `seed`.
pub fn demo_seed(seed: u64, index: u64) -> u64 {
    mix(seed, index)
}

/// Runs the expert from `reset(seed)` and records `(observation, action)` pairs.
pub fn expert_rollout<E: Environment>(env: &E, seed: u64, max_steps: u32) -> Result<Vec<(FeatureVector, ActionId)>> {
    let mut state = env.reset(seed)?;
    let mut pairs = Vec::new();
    for _ in 0..max_steps {
        match env.expert(&state)? {
            None => {
                return if env.success(&state) {
                    Ok(pairs)
                } else {
                    Err(Error::ExpertFailure {
                        seed,
                        steps: pairs.len(),
                    })
                };
            }
            Some(a) => {
                pairs.push((env.observe(&state), a));
                state = env.step(&state, a);
            }
        }
    }
    if env.success(&state) {
        Ok(pairs)
    } else {
        Err(Error::ExpertFailure {
            seed,
            steps: max_steps as usize,
        })
    }
}

/// `n` successful expert demonstrations with trajectory ids `0..n`.
pub fn gen_demos<E: Environment>(env: &E, n: usize, seed: u64, max_steps: u32) -> Result<DemoDataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("demo count must be >= 1".into()));
    }
    let mut trajs = Vec::with_capacity(n);
    for i in 0..n {
        let s = demo_seed(seed, i as u64);
        let pairs = expert_rollout(env, s, max_steps)?;
        if pairs.is_empty() {
            return Err(Error::ExpertFailure { seed: s, steps: 0 });
        }
        trajs.push(DemoTrajectory::from_pairs(TrajId(i as u32), env.task_tag(), pairs)?);
    }
    let mut ds = DemoDataset::new(trajs)?
        .with_meta("task", env.task_tag())
        .with_meta("seed", format!("{seed}"));
    for (k, v) in env.dataset_meta() {
        ds = ds.with_meta(k, v);
    }
    Ok(ds)
}
