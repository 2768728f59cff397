//! State identification: cosine similarity and exhaustive k-nearest-neighbor search.

use crate::dataset::{BatchRef, DemoDataset, DemoTrajectory, RetrievalBatch};
use crate::error::{Error, Result};
use crate::feature::{dot, FeatureVector};
use crate::math;
use alloc::vec::Vec;
use core::cmp::Ordering;

pub const DEFAULT_K: usize = 10;

/// Cosine similarity `a.b / (|a| |b|)`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    a.check_dim(b)?;
    Ok(cosine_raw(a.as_slice(), a.norm(), b.as_slice(), b.norm()))
}

#[inline]
pub(crate) fn cosine_raw(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    dot(a, b) / (norm_a * norm_b)
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    math::sqrt(a.iter().map(|v| v * v).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub entry: BatchRef,
    /// Position of `entry` in the batch it was drawn from.
    pub index: usize,
    pub similarity: f64,
}

/// The `k` most similar batch entries, most similar first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query: FeatureVector,
    pub neighbors: Vec<Neighbor>,
    pub k: usize,
}

/// Descending similarity; equal similarity goes to the lower `(traj_id, t)`.
pub(crate) fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.entry.cmp(&b.entry))
}

/// Exhaustive linear scan for the `k` entries most cosine-similar to `query`.
pub fn knn(query: &FeatureVector, batch: &RetrievalBatch, k: usize) -> Result<CandidateSet> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if query.dim() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            found: query.dim(),
        });
    }
    let q = query.as_slice();
    let qn = query.norm();
    let keep = k.min(batch.len());
    let mut top: Vec<Neighbor> = Vec::with_capacity(keep + 1);
    for i in 0..batch.len() {
        let n = Neighbor {
            entry: batch.entry(i),
            index: i,
            similarity: cosine_raw(q, qn, batch.feature(i), batch.norm(i)),
        };
        if top.len() == keep {
            if rank_order(&n, &top[keep - 1]) != Ordering::Less {
                continue;
            }
            top.pop();
        }
        let pos = top
            .binary_search_by(|probe| rank_order(probe, &n))
            .unwrap_or_else(|p| p);
        top.insert(pos, n);
    }
    Ok(CandidateSet {
        query: query.clone(),
        neighbors: top,
        k,
    })
}

/// The demonstration containing `entry`, cut off after `entry`.
pub fn expert_prefix(entry: BatchRef, dataset: &DemoDataset) -> Result<DemoTrajectory> {
    let dangling = Error::DanglingReference {
        traj_id: entry.traj_id,
        t: entry.t,
    };
    let traj = dataset.trajectory(entry.traj_id).ok_or(dangling.clone())?;
    let steps = traj.prefix_steps(entry.t).ok_or(dangling)?;
    DemoTrajectory::new(traj.traj_id(), traj.task_tag(), steps.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionId;
    use crate::dataset::testutil::*;
    use crate::dataset::TrajId;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn identity_and_orthogonality() {
        let v = fv(&[0.3, -2.0, 7.5]);
        assert_eq!(cosine_similarity(&v, &v).unwrap(), 1.0);
        let e1 = fv(&[1.0, 0.0]);
        let e2 = fv(&[0.0, 1.0]);
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&e1, &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matches_exact_rational_evaluation() {
        // 32 / sqrt(14 * 77) = 32 / sqrt(1078); evaluated to 30 digits:
        // 0.974631846197076271078572491126...
        let a = fv(&[1.0, 2.0, 3.0]);
        let b = fv(&[4.0, 5.0, 6.0]);
        let got = cosine_similarity(&a, &b).unwrap();
        assert!((got - 0.974_631_846_197_076_271_078_6).abs() < 1e-12, "{got}");
    }

    #[test]
    fn query_equal_to_entry_ranks_first() {
        let ds = random_dataset(3, 4, 6, 5);
        let batch = ds.flatten();
        let target = 7.min(batch.len() - 1);
        let q = FeatureVector::new(batch.feature(target).to_vec()).unwrap();
        let c = knn(&q, &batch, 3).unwrap();
        assert_eq!(c.neighbors[0].index, target);
        assert!((c.neighbors[0].similarity - 1.0).abs() < 1e-15);
    }

    #[test]
    fn k_beyond_batch_returns_everything_sorted() {
        let ds = random_dataset(4, 2, 3, 4);
        let batch = ds.flatten();
        let q = fv(&[1.0, 0.5, -0.5, 0.2]);
        let c = knn(&q, &batch, 1000).unwrap();
        assert_eq!(c.neighbors.len(), batch.len());
        assert!(c.neighbors.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn ties_prefer_lower_reference() {
        let a = traj(4, &[&[1.0, 0.0], &[2.0, 0.0]], &[ActionId::BodyLeft; 2]);
        let b = traj(1, &[&[3.0, 0.0]], &[ActionId::BodyLeft]);
        let ds = DemoDataset::new(vec![a, b]).unwrap();
        let c = knn(&fv(&[1.0, 0.0]), &ds.flatten(), 2).unwrap();
        let got: Vec<_> = c.neighbors.iter().map(|n| (n.entry.traj_id.0, n.entry.t)).collect();
        assert_eq!(got, vec![(1, 1), (4, 1)]);
    }

    #[test]
    fn empty_batch_and_zero_k() {
        let ds = random_dataset(4, 1, 2, 2);
        let batch = ds.flatten();
        assert!(knn(&fv(&[1.0, 1.0]), &batch, 0).is_err());
    }

    #[test]
    fn random_batch_matches_full_sort() {
        let ds = random_dataset(77, 10, 9, 6);
        let batch = ds.flatten();
        let q = fv(&[0.1, -0.4, 0.9, 0.2, 0.0, -0.3]);
        let got = knn(&q, &batch, 5).unwrap();
        // oracle: score everything, sort by (-sim, ref)
        let mut all: Vec<(f64, BatchRef)> = (0..batch.len())
            .map(|i| {
                let f = FeatureVector::new(batch.feature(i).to_vec()).unwrap();
                (cosine_similarity(&q, &f).unwrap(), batch.entry(i))
            })
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let expected: Vec<_> = all[..5].iter().map(|p| p.1).collect();
        let actual: Vec<_> = got.neighbors.iter().map(|n| n.entry).collect();
        assert_eq!(actual, expected);
        for (n, (s, _)) in got.neighbors.iter().zip(&all) {
            assert_eq!(n.similarity, *s);
        }
    }

    #[test]
    fn prefix_slices() {
        let feats: Vec<Vec<f64>> = (1..=9).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = feats.iter().map(|f| f.as_slice()).collect();
        let ds = DemoDataset::new(vec![traj(2, &refs, &[ActionId::HandUp; 9])]).unwrap();
        let r = |t| BatchRef { traj_id: TrajId(2), t };
        assert_eq!(expert_prefix(r(1), &ds).unwrap().len(), 1);
        assert_eq!(expert_prefix(r(9), &ds).unwrap(), ds.trajectories()[0]);
        let p = expert_prefix(r(4), &ds).unwrap();
        let ts: Vec<_> = p.steps().iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![1, 2, 3, 4]);
        assert_eq!(p.steps()[3].feature.as_slice(), &[4.0]);
        assert!(expert_prefix(r(10), &ds).is_err());
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(
            a in nonzero_vec(6),
            b in nonzero_vec(6),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            let fa = FeatureVector::new(a.clone()).unwrap();
            let fb = FeatureVector::new(b.clone()).unwrap();
            let s = cosine_similarity(&fa, &fb).unwrap();
            prop_assert!((s - cosine_similarity(&fb, &fa).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
            let sa = FeatureVector::new(a.iter().map(|x| x * alpha).collect()).unwrap();
            let sb = FeatureVector::new(b.iter().map(|x| x * beta).collect()).unwrap();
            prop_assert!((s - cosine_similarity(&sa, &sb).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn no_excluded_entry_is_strictly_better(seed in 0u64..500, k in 1usize..12) {
            let ds = random_dataset(seed, 5, 6, 3);
            let batch = ds.flatten();
            let q = FeatureVector::new(batch.feature(0).iter().map(|x| x + 0.3).collect()).unwrap();
            let c = knn(&q, &batch, k).unwrap();
            prop_assert_eq!(c.neighbors.len(), k.min(batch.len()));
            let worst = c.neighbors.last().unwrap().similarity;
            let chosen: Vec<usize> = c.neighbors.iter().map(|n| n.index).collect();
            for i in 0..batch.len() {
                if !chosen.contains(&i) {
                    let s = cosine_raw(q.as_slice(), q.norm(), batch.feature(i), batch.norm(i));
                    prop_assert!(s <= worst);
                }
            }
        }
    }
}
