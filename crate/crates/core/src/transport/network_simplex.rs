//! Primal network simplex for the balanced transportation problem.
//!
//! Sources `0..m` ship integer supplies to sinks `0..n` over a complete
//! bipartite graph of uncapacitated arcs. An artificial root joined to every
//! node gives the initial strongly feasible spanning tree; leaving arcs are
//! picked with the first/last blocking rule that keeps the tree strongly
//! feasible, so degenerate pivots cannot cycle. Entering arcs come from
//! block-search pricing.

use crate::error::{Error, Result};
use crate::math;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

const NONE: usize = usize::MAX;

/// Optimal integer flows, row-major `m * n`.
pub(crate) fn solve(cost: &[f64], m: usize, n: usize, supply: &[i64], demand: &[i64]) -> Result<Vec<i64>> {
    debug_assert_eq!(cost.len(), m * n);
    if supply.iter().sum::<i64>() != demand.iter().sum::<i64>() {
        return Err(Error::Solver("unbalanced supplies".into()));
    }
    let mut s = Simplex::new(cost, m, n, supply, demand);
    s.run()?;
    if s.flow[m * n..].iter().any(|&f| f != 0) {
        return Err(Error::Solver("artificial arc carries flow at optimum".into()));
    }
    s.flow.truncate(m * n);
    Ok(s.flow)
}

struct Simplex {
    node_count: usize,
    arc_count: usize,
    root: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<i64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// `pred[v]` points from `v` up to `parent[v]`.
    pred_up: Vec<bool>,
    depth: Vec<u32>,
    children: Vec<Vec<usize>>,
    pi: Vec<f64>,
    eps: f64,
    block: usize,
    next_arc: usize,
    stack: Vec<usize>,
}

impl Simplex {
    fn new(cost: &[f64], m: usize, n: usize, supply: &[i64], demand: &[i64]) -> Self {
        let node_count = m + n + 1;
        let root = m + n;
        let real = m * n;
        let arc_count = real + m + n;
        let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let art_cost = (max_cost + 1.0) * node_count as f64;

        let mut source = Vec::with_capacity(arc_count);
        let mut target = Vec::with_capacity(arc_count);
        let mut costs = Vec::with_capacity(arc_count);
        for i in 0..m {
            for j in 0..n {
                source.push(i);
                target.push(m + j);
                costs.push(cost[i * n + j]);
            }
        }
        let mut flow = vec![0i64; arc_count];
        let mut in_tree = vec![false; arc_count];
        let mut parent = vec![NONE; node_count];
        let mut pred = vec![NONE; node_count];
        let mut pred_up = vec![false; node_count];
        let mut depth = vec![0u32; node_count];
        let mut pi = vec![0.0; node_count];
        let mut children = vec![Vec::new(); node_count];

        for v in 0..m + n {
            let e = real + v;
            let b = if v < m { supply[v] } else { -demand[v - m] };
            if b >= 0 {
                source.push(v);
                target.push(root);
                costs.push(0.0);
                flow[e] = b;
                pred_up[v] = true;
                pi[v] = 0.0;
            } else {
                source.push(root);
                target.push(v);
                costs.push(art_cost);
                flow[e] = -b;
                pred_up[v] = false;
                pi[v] = art_cost;
            }
            in_tree[e] = true;
            parent[v] = root;
            pred[v] = e;
            depth[v] = 1;
            children[root].push(v);
        }

        let block = (math::sqrt(arc_count as f64) as usize).max(10).min(arc_count);
        Self {
            node_count,
            arc_count,
            root,
            source,
            target,
            cost: costs,
            flow,
            in_tree,
            parent,
            pred,
            pred_up,
            depth,
            children,
            pi,
            eps: f64::EPSILON * 64.0 * art_cost,
            block,
            next_arc: 0,
            stack: Vec::new(),
        }
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]]
    }

    fn find_entering(&mut self) -> Option<usize> {
        let mut best = NONE;
        let mut min = 0.0;
        let mut count = self.block;
        let mut e = self.next_arc;
        for _ in 0..self.arc_count {
            if !self.in_tree[e] {
                let rc = self.reduced_cost(e);
                if rc < min {
                    min = rc;
                    best = e;
                }
            }
            e += 1;
            if e == self.arc_count {
                e = 0;
            }
            count -= 1;
            if count == 0 {
                if min < -self.eps {
                    break;
                }
                count = self.block;
            }
        }
        self.next_arc = e;
        (min < -self.eps).then_some(best)
    }

    fn find_join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        u
    }

    fn run(&mut self) -> Result<()> {
        // A generous bound; strongly feasible pivoting terminates well before it.
        let limit = 50 * self.arc_count * self.node_count + 1000;
        for _ in 0..limit {
            let Some(in_arc) = self.find_entering() else {
                return Ok(());
            };
            self.pivot(in_arc)?;
        }
        Err(Error::Solver(format!("no convergence after {limit} pivots")))
    }

    fn pivot(&mut self, in_arc: usize) -> Result<()> {
        let first = self.source[in_arc];
        let second = self.target[in_arc];
        let join = self.find_join(first, second);

        let mut delta = i64::MAX;
        let mut u_out = NONE;
        let mut out_on_first = false;
        let mut u = first;
        while u != join {
            if self.pred_up[u] {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    out_on_first = true;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            if !self.pred_up[u] {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    out_on_first = false;
                }
            }
            u = self.parent[u];
        }
        if u_out == NONE {
            return Err(Error::Solver("unbounded cycle".into()));
        }

        if delta > 0 {
            self.flow[in_arc] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                self.flow[e] += if self.pred_up[u] { -delta } else { delta };
                u = self.parent[u];
            }
            u = second;
            while u != join {
                let e = self.pred[u];
                self.flow[e] += if self.pred_up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if out_on_first { (first, second) } else { (second, first) };
        self.in_tree[self.pred[u_out]] = false;
        self.in_tree[in_arc] = true;

        // Re-hang the cut subtree below `v_in`, reversing the path u_in .. u_out.
        let mut x = u_in;
        let mut new_parent = v_in;
        let mut new_pred = in_arc;
        let mut new_up = self.source[in_arc] == u_in;
        loop {
            let old_parent = self.parent[x];
            let old_pred = self.pred[x];
            let old_up = self.pred_up[x];
            self.parent[x] = new_parent;
            self.pred[x] = new_pred;
            self.pred_up[x] = new_up;
            self.children[new_parent].push(x);
            let siblings = &mut self.children[old_parent];
            if let Some(pos) = siblings.iter().position(|&c| c == x) {
                siblings.swap_remove(pos);
            }
            if x == u_out {
                break;
            }
            new_parent = x;
            new_pred = old_pred;
            new_up = !old_up;
            x = old_parent;
        }

        let target_pi = if self.pred_up[u_in] {
            self.pi[v_in] - self.cost[in_arc]
        } else {
            self.pi[v_in] + self.cost[in_arc]
        };
        let sigma = target_pi - self.pi[u_in];
        self.stack.clear();
        self.stack.push(u_in);
        while let Some(v) = self.stack.pop() {
            self.pi[v] += sigma;
            self.depth[v] = self.depth[self.parent[v]] + 1;
            self.stack.extend_from_slice(&self.children[v]);
        }
        debug_assert!(self.parent[self.root] == NONE);
        debug_assert!(self.node_count > 0);
        Ok(())
    }
}
