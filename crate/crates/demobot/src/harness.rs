//! Closed-loop experiments: demonstrations, model building, paired-seed episodes,
//! and per-cell statistics.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::format::{DistanceMatrix, Model};
use crate::stats::{clopper_pearson, fisher_exact};
use demobot_core::env::fork::ForkEnv;
use demobot_core::env::surrogate::{EnvConfig, SurrogateEnv, Task};
use demobot_core::env::{gen_demos, mix, Environment};
use demobot_core::policy::{gcbc_action, gcbc_train, retrieval_action, valued_retrieval_action};
use demobot_core::reachability::{build_graph, value_iteration};
use demobot_core::similarity::knn;
use demobot_core::subgoal::{select_subgoal, LiveTrajectory, SubgoalDecision};
use demobot_core::transport::wasserstein_between;
use demobot_core::{ActionId, BatchRef, DemoDataset, GroundMetric, RetrievalBatch};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

pub const DEFAULT_MAX_STEPS: u32 = demobot_core::env::DEFAULT_MAX_STEPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CurtainOpen,
    GapCover,
    /// The two-entrance junction world with a history-dependent exit.
    Fork,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::CurtainOpen => "curtain_open",
            Scenario::GapCover => "gap_cover",
            Scenario::Fork => "fork",
        }
    }

    pub fn task(self) -> Option<Task> {
        match self {
            Scenario::CurtainOpen => Some(Task::CurtainOpen),
            Scenario::GapCover => Some(Task::GapCover),
            Scenario::Fork => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "retrieval")]
    Retrieval,
    #[serde(rename = "valued")]
    Valued,
    #[serde(rename = "gcbc")]
    Gcbc,
    #[serde(rename = "naive_1nn")]
    Naive1nn,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Retrieval => "retrieval",
            PolicyKind::Valued => "valued",
            PolicyKind::Gcbc => "gcbc",
            PolicyKind::Naive1nn => "naive_1nn",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Evaluation-time changes to the environment; demonstrations always use the nominal setting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Profile {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Per-episode random stiffness and color.
    #[serde(rename = "material")]
    Material,
    /// Wider start poses: 1.5 to 3 m out, up to 2 m lateral, up to 20 degrees off.
    #[serde(rename = "position")]
    Position,
    /// Smaller doorway or gap.
    #[serde(rename = "size_s")]
    SizeS,
    /// Larger doorway or gap.
    #[serde(rename = "size_l")]
    SizeL,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::None => "none",
            Profile::Material => "material",
            Profile::Position => "position",
            Profile::SizeS => "size_s",
            Profile::SizeL => "size_l",
        }
    }

    pub fn apply(self, mut cfg: EnvConfig) -> EnvConfig {
        let scale = |cfg: &mut EnvConfig, curtain: f64, gap: f64| match cfg.task {
            Task::CurtainOpen => cfg.curtain_width *= curtain,
            Task::GapCover => cfg.gap_width *= gap,
        };
        match self {
            Profile::None => {}
            Profile::Material => cfg.randomize_material = true,
            Profile::Position => {
                cfg.distance = [1.5, 3.0];
                cfg.lateral = 2.0;
                cfg.heading_deg = 20.0;
            }
            Profile::SizeS => scale(&mut cfg, 0.85, 0.8),
            Profile::SizeL => scale(&mut cfg, 1.2, 1.1),
        }
        cfg
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_max_steps() -> u32 {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub task: Scenario,
    pub policies: Vec<PolicyKind>,
    pub demo_counts: Vec<usize>,
    #[serde(default)]
    pub profile: Profile,
    pub episodes: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    /// Base of the per-episode reset seeds, shared by every cell.
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be >= 1".into()));
        }
        if self.policies.is_empty() || self.demo_counts.is_empty() {
            return Err(Error::Config("need at least one policy and one demo count".into()));
        }
        if self.demo_counts.contains(&0) {
            return Err(Error::Config("demo counts must be >= 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        if self.task == Scenario::Fork && self.profile != Profile::None {
            return Err(Error::Config("the fork scenario has no randomization profiles".into()));
        }
        Ok(())
    }

    /// Reset seed of episode `e`; identical across policies and demo counts.
    pub fn episode_seed(&self, e: usize) -> u64 {
        mix(mix(self.seed, 0x0e91_50de), e as u64)
    }
}

/// One candidate of a logged sub-goal decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLog {
    pub entry: BatchRef,
    pub similarity: f64,
    pub distance: f64,
    pub value: f64,
    pub node: usize,
    pub filtered: bool,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub step: u32,
    pub action: ActionId,
    pub chosen: BatchRef,
    pub live_node: usize,
    pub threshold: f64,
    pub fallback_used: bool,
    pub candidates: Vec<CandidateLog>,
}

impl DecisionLog {
    fn new(step: u32, action: ActionId, d: &SubgoalDecision) -> Self {
        Self {
            step,
            action,
            chosen: d.chosen,
            live_node: d.live_node,
            threshold: d.threshold,
            fallback_used: d.fallback_used,
            candidates: d
                .candidates
                .iter()
                .map(|c| CandidateLog {
                    entry: c.entry,
                    similarity: c.similarity,
                    distance: c.distance,
                    value: c.value,
                    node: c.node,
                    filtered: c.filtered,
                    excluded: c.excluded,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy: PolicyKind,
    pub demos: usize,
    pub episode: usize,
    pub seed: u64,
    pub success: bool,
    pub steps: u32,
    pub decisions: u32,
    pub fallbacks: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit: Vec<DecisionLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub policy: PolicyKind,
    pub demos: usize,
    pub episodes: usize,
    pub successes: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_steps: f64,
    pub fallback_rate: f64,
    /// Summed episode wall-clock time; not written to reports.
    #[serde(skip)]
    pub wall_ms: u128,
}

impl CellResult {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }
}

/// A policy against the naive control at the same demo count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub demos: usize,
    pub policy: PolicyKind,
    pub control: PolicyKind,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub task: Scenario,
    pub profile: Profile,
    pub config_hash: String,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<Comparison>,
    #[serde(skip)]
    pub episodes: Vec<EpisodeRecord>,
}

impl ResultTable {
    pub fn cell(&self, policy: PolicyKind, demos: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.policy == policy && c.demos == demos)
    }
}

/// Two-sided exact p-value for the success counts of two cells.
pub fn significance(a: &CellResult, b: &CellResult) -> Result<f64> {
    if a.episodes != b.episodes {
        return Err(Error::Config(format!(
            "cells ran {} and {} episodes; paired comparison needs equal counts",
            a.episodes, b.episodes
        )));
    }
    fisher_exact(
        a.successes as u64,
        a.episodes as u64,
        b.successes as u64,
        b.episodes as u64,
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every sub-goal decision in the episode records.
    pub keep_audits: bool,
}

/// Graph and values (plus the behavior-cloning network when asked) for `dataset`.
pub fn build_model(dataset: &DemoDataset, config: &Config, with_gcbc: bool) -> Result<Model> {
    let metric = config.subgoal.metric;
    let eps = config.merge.resolve(dataset, metric);
    let graph = build_graph(dataset, eps, metric)?;
    let values = value_iteration(&graph, config.gamma, config.value_tol)?;
    let gcbc = if with_gcbc {
        Some(gcbc_train(dataset, &config.gcbc)?)
    } else {
        None
    };
    let mut meta = BTreeMap::new();
    meta.insert("config_hash".into(), config.hash());
    meta.insert("trajectories".into(), dataset.trajectories().len().to_string());
    meta.insert("steps".into(), dataset.total_steps().to_string());
    Ok(Model {
        graph,
        values,
        gcbc,
        meta,
    })
}

/// Whole-trajectory distances between every pair of demonstrations.
pub fn pairwise_wasserstein(dataset: &DemoDataset, metric: GroundMetric) -> Result<DistanceMatrix> {
    let trajs = dataset.trajectories();
    let n = trajs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| Ok(wasserstein_between(trajs[i].steps(), trajs[j].steps(), metric, false)?.value))
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; n * n];
    for (&(i, j), &d) in pairs.iter().zip(&dists) {
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    Ok(DistanceMatrix {
        ids: trajs.iter().map(|t| t.traj_id()).collect(),
        metric,
        values,
    })
}

/// A demonstration set with everything the policies need at run time.
pub struct Prepared {
    pub dataset: DemoDataset,
    pub batch: RetrievalBatch,
    pub model: Model,
}

impl Prepared {
    pub fn new(dataset: DemoDataset, config: &Config, with_gcbc: bool) -> Result<Self> {
        let model = build_model(&dataset, config, with_gcbc)?;
        Ok(Self {
            batch: dataset.flatten(),
            dataset,
            model,
        })
    }

    /// Next action of `policy` for the live history, with the sub-goal decision behind it.
    pub fn act(
        &self,
        policy: PolicyKind,
        live: &LiveTrajectory,
        config: &Config,
    ) -> Result<(ActionId, Option<SubgoalDecision>)> {
        if policy == PolicyKind::Naive1nn {
            let c = knn(live.last(), &self.batch, 1)?;
            return Ok((self.batch.action(c.neighbors[0].index), None));
        }
        let d = select_subgoal(
            live,
            &self.batch,
            &self.dataset,
            &self.model.graph,
            &self.model.values,
            &config.subgoal,
        )?;
        let a = match policy {
            PolicyKind::Retrieval => retrieval_action(&d, &self.dataset)?,
            PolicyKind::Valued => valued_retrieval_action(&d.policy_candidates(), &self.dataset, config.aggregation)?,
            PolicyKind::Gcbc => {
                let model = self
                    .model
                    .gcbc
                    .as_ref()
                    .ok_or_else(|| Error::Invariant("behavior-cloning network was not trained".into()))?;
                gcbc_action(model, live.last(), &self.dataset.step(d.chosen)?.feature)?
            }
            PolicyKind::Naive1nn => unreachable!("handled above"),
        };
        Ok((a, Some(d)))
    }
}

/// Runs one closed-loop episode from `reset(seed)`.
pub fn run_episode<E: Environment>(
    env: &E,
    prepared: &Prepared,
    policy: PolicyKind,
    seed: u64,
    max_steps: u32,
    config: &Config,
    keep_audits: bool,
) -> Result<EpisodeRecord> {
    let mut state = env.reset(seed)?;
    let mut live = LiveTrajectory::start(env.observe(&state));
    let mut rec = EpisodeRecord {
        policy,
        demos: prepared.dataset.trajectories().len(),
        episode: 0,
        seed,
        success: false,
        steps: 0,
        decisions: 0,
        fallbacks: 0,
        audit: Vec::new(),
    };
    while rec.steps < max_steps && !env.success(&state) {
        let (a, decision) = prepared.act(policy, &live, config)?;
        if let Some(d) = &decision {
            rec.decisions += 1;
            rec.fallbacks += d.fallback_used as u32;
            if keep_audits {
                rec.audit.push(DecisionLog::new(rec.steps, a, d));
            }
        }
        state = env.step(&state, a);
        live.push(env.observe(&state))?;
        rec.steps += 1;
    }
    rec.success = env.success(&state);
    Ok(rec)
}

/// Generates the largest demonstration set once; smaller cells use its leading trajectories.
pub fn demos_for<E: Environment>(env: &E, spec: &ExperimentSpec, config: &Config) -> Result<DemoDataset> {
    let n = *spec.demo_counts.iter().max().expect("validated non-empty");
    Ok(gen_demos(env, n, config.seed, spec.max_steps)?)
}

pub fn run_experiment(spec: &ExperimentSpec, config: &Config, opts: RunOptions) -> Result<ResultTable> {
    spec.validate()?;
    config.validate()?;
    match spec.task.task() {
        Some(task) => {
            let base = config.env_config(task);
            let demo_env = SurrogateEnv::new(base.clone())?;
            let eval_env = SurrogateEnv::new(spec.profile.apply(base))
                .map_err(|e| Error::from(e).context(format!("profile {}", spec.profile)))?;
            run_with(&demo_env, &eval_env, spec, config, opts)
        }
        None => {
            let env = ForkEnv::default();
            run_with(&env, &env, spec, config, opts)
        }
    }
}

fn run_with<E: Environment + Sync>(
    demo_env: &E,
    eval_env: &E,
    spec: &ExperimentSpec,
    config: &Config,
    opts: RunOptions,
) -> Result<ResultTable> {
    let all = demos_for(demo_env, spec, config).map_err(|e| e.context("generating demonstrations"))?;
    let with_gcbc = spec.policies.contains(&PolicyKind::Gcbc);
    let prepared: Vec<Prepared> = spec
        .demo_counts
        .par_iter()
        .map(|&n| {
            all.truncated(n)
                .map_err(Error::from)
                .and_then(|ds| Prepared::new(ds, config, with_gcbc))
                .map_err(|e| e.context(format!("building model for {n} demos")))
        })
        .collect::<Result<_>>()?;
    let work: Vec<(usize, usize, usize)> = (0..prepared.len())
        .flat_map(|c| (0..spec.policies.len()).flat_map(move |p| (0..spec.episodes).map(move |e| (c, p, e))))
        .collect();
    let outcomes: Vec<(EpisodeRecord, u128)> = work
        .par_iter()
        .map(|&(c, p, e)| {
            let policy = spec.policies[p];
            let start = Instant::now();
            let mut rec = run_episode(
                eval_env,
                &prepared[c],
                policy,
                spec.episode_seed(e),
                spec.max_steps,
                config,
                opts.keep_audits,
            )
            .map_err(|err| err.context(format!("cell {policy}/{} episode {e}", spec.demo_counts[c])))?;
            rec.episode = e;
            Ok((rec, start.elapsed().as_millis()))
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for (c, &demos) in spec.demo_counts.iter().enumerate() {
        for (p, &policy) in spec.policies.iter().enumerate() {
            let lo = (c * spec.policies.len() + p) * spec.episodes;
            let eps = &outcomes[lo..lo + spec.episodes];
            let successes = eps.iter().filter(|(r, _)| r.success).count();
            let decisions: u64 = eps.iter().map(|(r, _)| r.decisions as u64).sum();
            let fallbacks: u64 = eps.iter().map(|(r, _)| r.fallbacks as u64).sum();
            let (ci_low, ci_high) = clopper_pearson(successes as u64, spec.episodes as u64, 0.05)?;
            cells.push(CellResult {
                policy,
                demos,
                episodes: spec.episodes,
                successes,
                ci_low,
                ci_high,
                mean_steps: eps.iter().map(|(r, _)| r.steps as f64).sum::<f64>() / spec.episodes as f64,
                fallback_rate: if decisions == 0 {
                    0.0
                } else {
                    fallbacks as f64 / decisions as f64
                },
                wall_ms: eps.iter().map(|(_, t)| t).sum(),
            });
        }
    }
    let mut comparisons = Vec::new();
    for &demos in &spec.demo_counts {
        let control = cells
            .iter()
            .find(|c| c.demos == demos && c.policy == PolicyKind::Naive1nn);
        if let Some(control) = control {
            for cell in cells
                .iter()
                .filter(|c| c.demos == demos && c.policy != PolicyKind::Naive1nn)
            {
                comparisons.push(Comparison {
                    demos,
                    policy: cell.policy,
                    control: PolicyKind::Naive1nn,
                    p_value: significance(cell, control)?,
                });
            }
        }
    }
    Ok(ResultTable {
        name: spec.name.clone(),
        task: spec.task,
        profile: spec.profile,
        config_hash: config.hash(),
        cells,
        comparisons,
        episodes: outcomes.into_iter().map(|(r, _)| r).collect(),
    })
}
