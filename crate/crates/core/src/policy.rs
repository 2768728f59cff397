//! Motion generators: replay retrieval, value-weighted retrieval, and a
//! goal-conditioned behavior-cloning classifier trained from scratch.

use crate::action::ActionId;
use crate::dataset::{DemoDataset, ACTION_COUNT};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::math;
use crate::subgoal::{CandidateAudit, SubgoalDecision};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Replays the action stored at the chosen sub-goal step.
pub fn retrieval_action(decision: &SubgoalDecision, dataset: &DemoDataset) -> Result<ActionId> {
    Ok(dataset.step(decision.chosen)?.action)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

/// Groups candidates by stored action and returns the action with the largest
/// aggregated value. Ties go to the action whose best candidate has the higher
/// value, then to the lower id.
pub fn valued_retrieval_action(
    candidates: &[CandidateAudit],
    dataset: &DemoDataset,
    aggregation: Aggregation,
) -> Result<ActionId> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut sum = [0.0f64; ACTION_COUNT];
    let mut count = [0usize; ACTION_COUNT];
    let mut best = [f64::NEG_INFINITY; ACTION_COUNT];
    for c in candidates {
        let a = dataset.step(c.entry)?.action.index();
        sum[a] += c.value;
        count[a] += 1;
        best[a] = best[a].max(c.value);
    }
    let score = |a: usize| match aggregation {
        Aggregation::Sum => sum[a],
        Aggregation::Mean => sum[a] / count[a] as f64,
    };
    let mut winner: Option<usize> = None;
    for a in (0..ACTION_COUNT).filter(|&a| count[a] > 0) {
        winner = match winner {
            None => Some(a),
            Some(w) => {
                let better = score(a) > score(w) || (score(a) == score(w) && best[a] > best[w]);
                Some(if better { a } else { w })
            }
        };
    }
    ActionId::from_index(winner.expect("non-empty") as u32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct GcbcParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub goal_horizon: u32,
    pub seed: u64,
}

impl Default for GcbcParams {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            goal_horizon: 10,
            seed: 0,
        }
    }
}

impl GcbcParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.hidden == 0 {
            return bad("hidden width must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if self.goal_horizon == 0 {
            return bad("goal horizon must be >= 1");
        }
        Ok(())
    }
}

/// Fully connected layer, weights row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = math::sqrt(6.0 / inputs as f64);
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()),
        );
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Three-layer rectifier network producing action logits, with input standardization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: [Dense; 3],
}

/// One training example: network input and target action.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: ActionId,
}

struct Trace {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
}

impl Mlp {
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            input_mean: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            layers: [
                Dense::init(input_dim, hidden, &mut rng),
                Dense::init(hidden, hidden, &mut rng),
                Dense::init(hidden, ACTION_COUNT, &mut rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All weights and biases, layer by layer, weights before bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                found: p.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + w]);
            off += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&p[off..off + b]);
            off += b;
        }
        Ok(())
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let x: Vec<f64> = input
            .iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let mut h1 = Vec::new();
        self.layers[0].forward(&x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut h2 = Vec::new();
        self.layers[1].forward(&h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = Vec::new();
        self.layers[2].forward(&h2, &mut logits);
        Trace { x, h1, h2, logits }
    }

    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        Ok(self.trace(input).logits)
    }

    /// Mean cross-entropy over `batch` and its gradient in `parameters()` order.
    pub fn loss_and_gradient(&self, batch: &[Sample]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let offsets = self.offsets();
        let mut loss = 0.0;
        let inv = 1.0 / batch.len().max(1) as f64;
        for s in batch {
            let tr = self.trace(&s.input);
            let p = softmax(&tr.logits);
            let y = s.target.index();
            loss -= math::ln(p[y].max(f64::MIN_POSITIVE));
            let d3: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(i, &pi)| pi - if i == y { 1.0 } else { 0.0 })
                .collect();
            let d2 = backprop(&self.layers[2], &tr.h2, &d3, &mut grad[offsets[2]..], inv, Some(&tr.h2));
            let d1 = backprop(&self.layers[1], &tr.h1, &d2, &mut grad[offsets[1]..], inv, Some(&tr.h1));
            backprop(&self.layers[0], &tr.x, &d1, &mut grad[offsets[0]..], inv, None);
        }
        (loss * inv, grad)
    }

    pub fn loss(&self, batch: &[Sample]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|s| {
                let p = softmax(&self.trace(&s.input).logits);
                -math::ln(p[s.target.index()].max(f64::MIN_POSITIVE))
            })
            .sum();
        total / batch.len().max(1) as f64
    }

    fn offsets(&self) -> [usize; 3] {
        let a = self.layers[0].param_count();
        let b = a + self.layers[1].param_count();
        [0, a, b]
    }
}

/// Accumulates the layer gradient and returns the gradient w.r.t. its input,
/// gated by the rectifier of `gate` when given.
fn backprop(
    layer: &Dense,
    input: &[f64],
    delta: &[f64],
    grad: &mut [f64],
    scale: f64,
    gate: Option<&[f64]>,
) -> Vec<f64> {
    let (gw, rest) = grad.split_at_mut(layer.weights.len());
    for (o, &d) in delta.iter().enumerate() {
        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
        for (g, x) in row.iter_mut().zip(input) {
            *g += scale * d * x;
        }
        rest[o] += scale * d;
    }
    let Some(gate) = gate else {
        return Vec::new();
    };
    let mut back = vec![0.0; layer.inputs];
    for (o, &d) in delta.iter().enumerate() {
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        for (b, w) in back.iter_mut().zip(row) {
            *b += d * w;
        }
    }
    for (b, g) in back.iter_mut().zip(gate) {
        if *g <= 0.0 {
            *b = 0.0;
        }
    }
    back
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| math::exp(l - m)).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Index of the largest logit; ties go to the lower index.
pub fn argmax_lowest(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GcbcModel {
    pub net: Mlp,
    pub params: GcbcParams,
    /// Mean training cross-entropy after each epoch.
    pub loss_curve: Vec<f64>,
}

impl GcbcModel {
    pub fn feature_dim(&self) -> usize {
        self.net.input_dim() / 2
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_curve.last().copied()
    }
}

fn concat(s: &[f64], g: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(s.len() + g.len());
    v.extend_from_slice(s);
    v.extend_from_slice(g);
    v
}

/// Hindsight tuples `(s_t, s_{t+h}, a_t)` with `h` drawn uniformly from
/// `1..=goal_horizon` and clipped to the end of the trajectory.
pub fn hindsight_samples(dataset: &DemoDataset, goal_horizon: u32, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let mut out = Vec::new();
    for traj in dataset.trajectories() {
        let steps = traj.steps();
        for i in 0..steps.len().saturating_sub(1) {
            let h = rng.gen_range(1..=goal_horizon) as usize;
            let j = (i + h).min(steps.len() - 1);
            out.push(Sample {
                input: concat(steps[i].feature.as_slice(), steps[j].feature.as_slice()),
                target: steps[i].action,
            });
        }
    }
    out
}

/// Trains on hindsight goals with Adam; deterministic given `params.seed`.
pub fn gcbc_train(dataset: &DemoDataset, params: &GcbcParams) -> Result<GcbcModel> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let probe = hindsight_samples(dataset, params.goal_horizon, &mut rng.clone());
    if probe.is_empty() {
        return Err(Error::DegenerateDataset(format!(
            "no trajectory has two or more steps ({} steps total)",
            dataset.total_steps()
        )));
    }
    let dim = 2 * dataset.feature_dim();
    let mut net = Mlp::new(dim, params.hidden, rng.gen());
    let (mean, scale) = standardization(dataset);
    net.input_mean = concat(&mean, &mean);
    net.input_scale = concat(&scale, &scale);
    let mut adam = Adam::new(net.param_count(), params.learning_rate);
    let mut curve = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        let mut samples = hindsight_samples(dataset, params.goal_horizon, &mut rng);
        samples.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in samples.chunks(params.batch_size) {
            let (loss, grad) = net.loss_and_gradient(chunk);
            total += loss * chunk.len() as f64;
            let mut p = net.parameters();
            adam.step(&mut p, &grad);
            net.set_parameters(&p)?;
        }
        curve.push(total / samples.len() as f64);
    }
    Ok(GcbcModel {
        net,
        params: *params,
        loss_curve: curve,
    })
}

fn standardization(dataset: &DemoDataset) -> (Vec<f64>, Vec<f64>) {
    let d = dataset.feature_dim();
    let n = dataset.total_steps() as f64;
    let mut mean = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for t in dataset.trajectories() {
        for s in t.steps() {
            for (i, v) in s.feature.as_slice().iter().enumerate() {
                mean[i] += v;
                sq[i] += v * v;
            }
        }
    }
    let scale = mean
        .iter_mut()
        .zip(&sq)
        .map(|(m, s)| {
            *m /= n;
            let var = (s / n - *m * *m).max(0.0);
            let sd = math::sqrt(var);
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - math::powi(Self::B1, self.t as u32);
        let c2 = 1.0 - math::powi(Self::B2, self.t as u32);
        for i in 0..p.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            p[i] -= self.lr * mh / (math::sqrt(vh) + Self::EPS);
        }
    }
}

/// Most likely action for reaching `goal` from `s`.
pub fn gcbc_action(model: &GcbcModel, s: &FeatureVector, goal: &FeatureVector) -> Result<ActionId> {
    s.check_dim(goal)?;
    let logits = model.net.logits(&concat(s.as_slice(), goal.as_slice()))?;
    ActionId::from_index(argmax_lowest(&logits) as u32)
}
