//! Trajectory similarity: exact optimal transport between two state sequences
//! with uniform marginals, and the distance-threshold candidate filter.
//!
//! The rational marginals `1/t` and `1/n` are scaled by `lcm(t, n)` so the
//! transportation problem is solved with integer supplies; masses are divided
//! back out afterwards.

mod network_simplex;

use crate::dataset::{DemoDataset, DemoTrajectory};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::math;
use crate::similarity::{cosine_raw, norm, CandidateSet, Neighbor};
use alloc::vec::Vec;

/// Per-state cost inside the transport problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GroundMetric {
    #[default]
    SquaredEuclidean,
    /// `1 - cosine similarity`.
    Cosine,
}

impl GroundMetric {
    pub fn cost(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            GroundMetric::SquaredEuclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            GroundMetric::Cosine => (1.0 - cosine_raw(a, norm(a), b, norm(b))).max(0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroundMetric::SquaredEuclidean => "squared_euclidean",
            GroundMetric::Cosine => "cosine",
        }
    }
}

/// Squared Euclidean distance between two features.
pub fn ground_cost(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    a.check_dim(b)?;
    Ok(GroundMetric::SquaredEuclidean.cost(a.as_slice(), b.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    cost: Vec<f64>,
}

impl CostMatrix {
    pub fn build<A: AsRef<[f64]>, B: AsRef<[f64]>>(live: &[A], expert: &[B], metric: GroundMetric) -> Result<Self> {
        if live.is_empty() || expert.is_empty() {
            return Err(Error::EmptyLive);
        }
        let dim = live[0].as_ref().len();
        let mut cost = Vec::with_capacity(live.len() * expert.len());
        for a in live {
            let a = a.as_ref();
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.len(),
                });
            }
            for b in expert {
                let b = b.as_ref();
                if b.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: b.len(),
                    });
                }
                cost.push(metric.cost(a, b));
            }
        }
        Ok(Self {
            rows: live.len(),
            cols: expert.len(),
            cost,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.cost
    }
}

/// Row-major transport masses; rows sum to `1/rows`, columns to `1/cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDistance {
    pub value: f64,
    pub plan: Option<TransportPlan>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Optimal uniform-marginal transport over a precomputed cost matrix.
pub fn solve_transport(cost: &CostMatrix, keep_plan: bool) -> Result<TrajectoryDistance> {
    let (t, n) = (cost.rows, cost.cols);
    let scale = (t as u64 / gcd(t as u64, n as u64)) * n as u64;
    let supply = alloc::vec![(scale / t as u64) as i64; t];
    let demand = alloc::vec![(scale / n as u64) as i64; n];
    let flow = if t == 1 || n == 1 {
        // only one feasible plan
        alloc::vec![if t == 1 { demand[0] } else { supply[0] }; t * n]
    } else {
        network_simplex::solve(&cost.cost, t, n, &supply, &demand)?
    };
    let inv = 1.0 / scale as f64;
    let mut value = 0.0;
    for (f, c) in flow.iter().zip(&cost.cost) {
        if *f != 0 {
            value += (*f as f64 * inv) * c;
        }
    }
    let plan = keep_plan.then(|| TransportPlan {
        rows: t,
        cols: n,
        mass: flow.iter().map(|&f| f as f64 * inv).collect(),
    });
    Ok(TrajectoryDistance { value, plan })
}

/// Wasserstein distance between two state sequences under `metric`.
pub fn wasserstein_between<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    live: &[A],
    expert: &[B],
    metric: GroundMetric,
    keep_plan: bool,
) -> Result<TrajectoryDistance> {
    let cost = CostMatrix::build(live, expert, metric)?;
    solve_transport(&cost, keep_plan)
}

/// Wasserstein distance between a live trajectory and an expert prefix, with the plan.
pub fn wasserstein(live: &DemoTrajectory, expert_prefix: &DemoTrajectory) -> Result<TrajectoryDistance> {
    wasserstein_between(
        live.steps(),
        expert_prefix.steps(),
        GroundMetric::SquaredEuclidean,
        true,
    )
}

/// How the trajectory-similarity threshold is chosen for one candidate set.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ThresholdRule {
    /// Linear-interpolated quantile of the candidates' own distances.
    Quantile(f64),
    Absolute(f64),
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Quantile(0.5)
    }
}

impl ThresholdRule {
    pub fn resolve(&self, distances: &[f64]) -> f64 {
        match *self {
            ThresholdRule::Absolute(v) => v,
            ThresholdRule::Quantile(q) => {
                let mut d = distances.to_vec();
                math::quantile(&mut d, q).unwrap_or(f64::INFINITY)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdRule::Quantile(q) if !(0.0..=1.0).contains(&q) => Err(Error::InvalidParameter(alloc::format!(
                "threshold quantile {q} outside [0, 1]"
            ))),
            ThresholdRule::Absolute(v) if v.is_nan() || v < 0.0 => Err(Error::InvalidParameter(alloc::format!(
                "absolute threshold {v} must be >= 0"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredCandidate {
    pub neighbor: Neighbor,
    pub distance: f64,
}

/// Distance from `live` to each candidate's expert prefix, in candidate order.
pub fn candidate_distances<A: AsRef<[f64]>>(
    candidates: &CandidateSet,
    live: &[A],
    dataset: &DemoDataset,
    metric: GroundMetric,
) -> Result<Vec<f64>> {
    candidates
        .neighbors
        .iter()
        .map(|n| {
            let prefix = dataset
                .trajectory(n.entry.traj_id)
                .and_then(|t| t.prefix_steps(n.entry.t))
                .ok_or(Error::DanglingReference {
                    traj_id: n.entry.traj_id,
                    t: n.entry.t,
                })?;
            Ok(wasserstein_between(live, prefix, metric, false)?.value)
        })
        .collect()
}

/// Keeps candidates whose expert prefix lies within `threshold` of the live trajectory.
pub fn trajectory_filter(
    candidates: &CandidateSet,
    live: &DemoTrajectory,
    dataset: &DemoDataset,
    threshold: f64,
) -> Result<Vec<FilteredCandidate>> {
    let d = candidate_distances(candidates, live.steps(), dataset, GroundMetric::SquaredEuclidean)?;
    Ok(candidates
        .neighbors
        .iter()
        .zip(d)
        .filter(|(_, d)| *d <= threshold)
        .map(|(n, d)| FilteredCandidate {
            neighbor: *n,
            distance: d,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionId;
    use crate::dataset::testutil::*;
    use crate::dataset::{BatchRef, TrajId};
    use crate::similarity::knn;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    /// Generic LP over the `t * n` plan entries, independent of the network simplex.
    fn lp_oracle(live: &[Vec<f64>], expert: &[Vec<f64>]) -> f64 {
        use minilp::{ComparisonOp, OptimizationDirection, Problem};
        let (t, n) = (live.len(), expert.len());
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let mut vars = vec![];
        for a in live {
            for b in expert {
                vars.push(p.add_var(GroundMetric::SquaredEuclidean.cost(a, b), (0.0, f64::INFINITY)));
            }
        }
        for i in 0..t {
            let expr: Vec<_> = (0..n).map(|j| (vars[i * n + j], 1.0)).collect();
            p.add_constraint(expr.as_slice(), ComparisonOp::Eq, 1.0 / t as f64);
        }
        for j in 0..n {
            let expr: Vec<_> = (0..t).map(|i| (vars[i * n + j], 1.0)).collect();
            p.add_constraint(expr.as_slice(), ComparisonOp::Eq, 1.0 / n as f64);
        }
        p.solve().unwrap().objective()
    }

    #[test]
    fn ground_cost_examples() {
        let v = fv(&[0.4, -1.0]);
        assert_eq!(ground_cost(&v, &v).unwrap(), 0.0);
        assert_eq!(ground_cost(&fv(&[0.0, 1e-300]), &fv(&[3.0, 4.0])).unwrap(), 25.0);
        assert!(ground_cost(&fv(&[1.0]), &v).is_err());
    }

    #[test]
    fn identical_trajectories_cost_nothing() {
        let t = traj(0, &[&[1.0, 2.0], &[0.0, 1.0], &[3.0, 3.0]], &[ActionId::HandUp; 3]);
        let w = wasserstein(&t, &t).unwrap();
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn single_steps_equal_ground_cost() {
        let a = traj(0, &[&[1.0, 2.0]], &[ActionId::HandUp]);
        let b = traj(1, &[&[-1.0, 0.5]], &[ActionId::HandUp]);
        let w = wasserstein(&a, &b).unwrap();
        assert_eq!(w.value, 4.0 + 2.25);
        assert_eq!(w.plan.unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn three_by_four_matches_lp() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..20 {
            let a = random_seq(&mut rng, 3, 4);
            let b = random_seq(&mut rng, 4, 4);
            let w = wasserstein_between(&a, &b, GroundMetric::SquaredEuclidean, true).unwrap();
            assert_abs_diff_eq!(w.value, lp_oracle(&a, &b), epsilon = 1e-7);
        }
    }

    #[test]
    fn value_is_plan_dot_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_seq(&mut rng, 6, 3);
        let b = random_seq(&mut rng, 9, 3);
        let cost = CostMatrix::build(&a, &b, GroundMetric::SquaredEuclidean).unwrap();
        let w = solve_transport(&cost, true).unwrap();
        let plan = w.plan.unwrap();
        let mut v = 0.0;
        for i in 0..6 {
            for j in 0..9 {
                v += plan.get(i, j) * cost.get(i, j);
            }
        }
        assert_eq!(v, w.value);
        assert_abs_diff_eq!(plan.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn larger_instances_stay_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (t, n) in [(50, 120), (37, 41), (64, 64), (1, 30), (30, 1)] {
            let a = random_seq(&mut rng, t, 8);
            let b = random_seq(&mut rng, n, 8);
            let w = wasserstein_between(&a, &b, GroundMetric::SquaredEuclidean, true).unwrap();
            let plan = w.plan.unwrap();
            for s in plan.row_sums() {
                assert_abs_diff_eq!(s, 1.0 / t as f64, epsilon = 1e-9);
            }
            for s in plan.col_sums() {
                assert_abs_diff_eq!(s, 1.0 / n as f64, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn threshold_rules() {
        let d = [0.5, 0.1, 0.9, 0.3, 0.7];
        assert_eq!(ThresholdRule::Absolute(0.2).resolve(&d), 0.2);
        let q = ThresholdRule::Quantile(0.6).resolve(&d);
        assert!(q > 0.5 && q < 0.7);
        assert!(ThresholdRule::Quantile(1.5).validate().is_err());
        assert!(ThresholdRule::Absolute(-1.0).validate().is_err());
        assert!(ThresholdRule::default().validate().is_ok());
    }

    fn filter_fixture() -> (DemoDataset, DemoTrajectory, CandidateSet) {
        let ds = random_dataset(21, 6, 8, 3);
        let live = traj(
            99,
            &[&[0.2, 0.1, 0.0], &[0.3, 0.2, 0.1], &[0.1, -0.2, 0.4]],
            &[ActionId::HandUp; 3],
        );
        let cands = knn(&fv(&[0.1, -0.2, 0.4]), &ds.flatten(), 5).unwrap();
        (ds, live, cands)
    }

    #[test]
    fn filter_extremes() {
        let (ds, live, cands) = filter_fixture();
        assert_eq!(trajectory_filter(&cands, &live, &ds, f64::INFINITY).unwrap().len(), 5);
        assert!(trajectory_filter(&cands, &live, &ds, 0.0).unwrap().is_empty());
    }

    #[test]
    fn sixty_percent_quantile_keeps_three_smallest() {
        let (ds, live, cands) = filter_fixture();
        let d = candidate_distances(&cands, live.steps(), &ds, GroundMetric::SquaredEuclidean).unwrap();
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(
            sorted.windows(2).all(|w| w[0] < w[1]),
            "fixture needs distinct distances"
        );
        let thr = ThresholdRule::Quantile(0.6).resolve(&d);
        let kept = trajectory_filter(&cands, &live, &ds, thr).unwrap();
        let mut got: Vec<f64> = kept.iter().map(|k| k.distance).collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, sorted[..3].to_vec());
    }

    #[test]
    fn dangling_candidate_is_an_error() {
        let (ds, live, mut cands) = filter_fixture();
        cands.neighbors[0].entry = BatchRef {
            traj_id: TrajId(1000),
            t: 1,
        };
        assert!(trajectory_filter(&cands, &live, &ds, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn optimal_symmetric_and_nonnegative(seed in 0u64..10_000, t in 1usize..=5, n in 1usize..=5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_seq(&mut rng, t, 3);
            let b = random_seq(&mut rng, n, 3);
            let ab = wasserstein_between(&a, &b, GroundMetric::SquaredEuclidean, true).unwrap();
            let ba = wasserstein_between(&b, &a, GroundMetric::SquaredEuclidean, false).unwrap();
            prop_assert!(ab.value >= 0.0);
            prop_assert!((ab.value - ba.value).abs() < 1e-9);
            prop_assert!((ab.value - lp_oracle(&a, &b)).abs() < 1e-7);
            let aa = wasserstein_between(&a, &a, GroundMetric::SquaredEuclidean, false).unwrap();
            prop_assert!(aa.value.abs() < 1e-9);
        }

        #[test]
        fn shrinking_threshold_never_adds(seed in 0u64..200, hi in 0.0f64..20.0, frac in 0.0f64..1.0) {
            let ds = random_dataset(seed, 5, 6, 3);
            let live = traj(99, &[&[0.2, 0.1, 0.0], &[0.1, -0.2, 0.4]], &[ActionId::HandUp; 2]);
            let cands = knn(&fv(&[0.1, -0.2, 0.4]), &ds.flatten(), 6).unwrap();
            let big = trajectory_filter(&cands, &live, &ds, hi).unwrap();
            let small = trajectory_filter(&cands, &live, &ds, hi * frac).unwrap();
            for s in &small {
                prop_assert!(big.iter().any(|b| b.neighbor.entry == s.neighbor.entry));
            }
        }
    }
}
