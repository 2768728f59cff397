//! Retrieval-based few-shot imitation for deformable mobile manipulation.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithmic piece:
//!
//! * [`dataset`]: demonstration steps, trajectories, and the flat retrieval batch.
//! * [`similarity`]: cosine state identification and k-nearest-neighbor candidates.
//! * [`transport`]: exact Wasserstein distance between trajectories (network simplex).
//! * [`reachability`]: goal-conditioned values on a merged demonstration graph.
//! * [`subgoal`]: the sub-goal selector combining all of the above.
//! * [`policy`]: replay, value-weighted replay, and goal-conditioned behavior cloning.
//! * [`env`]: a deterministic surrogate of the curtain tasks with a scripted expert.
//!
//! File formats, experiment orchestration, and the command line live in the
//! `demobot` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod action;
pub mod dataset;
pub mod env;
mod error;
pub mod feature;
pub(crate) mod math;
pub mod policy;
pub mod reachability;
pub mod similarity;
pub mod subgoal;
pub mod transport;

pub use action::ActionId;
pub use dataset::{BatchRef, DemoDataset, DemoTrajectory, RetrievalBatch, Step, TrajId};
pub use error::{Error, Result};
pub use feature::FeatureVector;
pub use transport::GroundMetric;
