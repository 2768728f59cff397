use crate::dataset::TrajId;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature vector has zero norm")]
    ZeroNorm,

    #[error("feature vector contains a non-finite entry")]
    NonFinite,

    #[error("feature vector is empty")]
    EmptyFeature,

    #[error("trajectory {0} has no steps")]
    EmptyTrajectory(TrajId),

    #[error("trajectory has no steps")]
    EmptyLive,

    #[error("dataset has no trajectories")]
    EmptyDataset,

    #[error("retrieval batch is empty")]
    EmptyBatch,

    #[error("trajectory {traj_id}: expected timestep {expected}, found {found}")]
    NonConsecutive { traj_id: TrajId, expected: u32, found: u32 },

    #[error("trajectory {traj_id}: step carries traj_id {found}")]
    MixedTrajId { traj_id: TrajId, found: TrajId },

    #[error("duplicate trajectory id {0}")]
    DuplicateTrajId(TrajId),

    #[error("action id {0} is outside 0..14")]
    InvalidAction(u32),

    #[error("reference ({traj_id}, {t}) does not resolve to a step")]
    DanglingReference { traj_id: TrajId, t: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("state graph is empty")]
    EmptyGraph,

    #[error("dataset too small to train on: {0}")]
    DegenerateDataset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("expert refused: {0}")]
    ExpertRefused(String),

    #[error("expert failed to finish episode with seed {seed} within {steps} steps")]
    ExpertFailure { seed: u64, steps: usize },

    #[error("transport solver failed: {0}")]
    Solver(String),
}
