//! Exact discrete optimal transport via min-cost flow.
//!
//! Successive shortest augmenting paths on the bipartite transport
//! graph with Dijkstra over reduced costs (Johnson potentials). Each
//! augmentation saturates at least one remaining supply or demand, so
//! at most `n + m - 1` rounds run.

use super::{CostFn, EmpiricalEmbedding};
use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Largest support accepted per side; larger instances belong to the
/// Sinkhorn solver.
pub const MAX_SUPPORT: usize = 512;

/// Optimal transport value and plan for a discrete instance.
#[derive(Debug, Clone)]
pub struct OtPlan {
    pub value: f64,
    /// `(source index, sink index, mass)` triples with positive mass.
    pub plan: Vec<(usize, usize, f64)>,
}

impl OtPlan {
    /// Row and column marginals of the plan.
    pub fn marginals(&self, n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut row = vec![0.0; n];
        let mut col = vec![0.0; m];
        for &(i, j, f) in &self.plan {
            row[i] += f;
            col[j] += f;
        }
        (row, col)
    }
}

/// Exact unregularized OT between weighted supports.
pub fn exact_ot_discrete(
    a: &EmpiricalEmbedding,
    b: &EmpiricalEmbedding,
    cost: CostFn,
) -> Result<OtPlan> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    for (side, n) in [("a", a.len()), ("b", b.len())] {
        if n > MAX_SUPPORT {
            let _ = side;
            return Err(Error::SupportTooLarge {
                size: n,
                limit: MAX_SUPPORT,
            });
        }
    }
    let n = a.len();
    let m = b.len();
    let mut costs = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            costs[i * m + j] = cost.eval(&a.points()[i], &b.points()[j]);
        }
    }
    Ok(min_cost_transport(a.weights(), b.weights(), &costs, m))
}

fn min_cost_transport(supply: &[f64], demand: &[f64], costs: &[f64], m: usize) -> OtPlan {
    let n = supply.len();
    let mut remaining_supply = supply.to_vec();
    let mut remaining_demand = demand.to_vec();
    let mut flow = vec![0.0f64; n * m];
    // Node potentials keep reduced costs nonnegative.
    let mut pot_a = vec![0.0f64; n];
    let mut pot_b = vec![0.0f64; m];

    const MASS_EPS: f64 = 1e-15;

    loop {
        let total_left: f64 = remaining_supply.iter().sum();
        if total_left <= 1e-12 {
            break;
        }
        // Multi-source Dijkstra from all sources with remaining supply.
        let nodes = n + m;
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<usize>> = vec![None; nodes]; // predecessor node
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::new();
        for i in 0..n {
            if remaining_supply[i] > MASS_EPS {
                dist[i] = 0.0;
                heap.push(HeapItem { dist: 0.0, node: i });
            }
        }
        let mut settled = vec![false; nodes];
        while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            if u < n {
                // Source -> every sink via forward edges.
                for j in 0..m {
                    let rc = costs[u * m + j] - pot_a[u] + pot_b[j];
                    let nd = d + rc.max(0.0);
                    let v = n + j;
                    if nd < dist[v] - 1e-18 {
                        dist[v] = nd;
                        prev[v] = Some(u);
                        heap.push(HeapItem { dist: nd, node: v });
                    }
                }
            } else {
                // Sink -> sources along residual (backward) edges.
                let j = u - n;
                for i in 0..n {
                    if flow[i * m + j] > MASS_EPS {
                        let rc = -(costs[i * m + j]) + pot_a[i] - pot_b[j];
                        let nd = d + rc.max(0.0);
                        if nd < dist[i] - 1e-18 {
                            dist[i] = nd;
                            prev[i] = Some(u);
                            heap.push(HeapItem { dist: nd, node: i });
                        }
                    }
                }
            }
        }
        // Cheapest reachable sink with remaining demand.
        let mut target = None;
        let mut best = f64::INFINITY;
        for j in 0..m {
            if remaining_demand[j] > MASS_EPS && dist[n + j] < best {
                best = dist[n + j];
                target = Some(n + j);
            }
        }
        let Some(target) = target else {
            break; // numerically exhausted
        };
        // Path head: the source the alternating path starts from.
        let mut head = target;
        while let Some(u) = prev[head] {
            head = u;
        }
        // Bottleneck: residual supply at the head, residual demand at the
        // target, and existing flow on every backward edge in between.
        let mut bottleneck = remaining_supply[head].min(remaining_demand[target - n]);
        let mut v = target;
        while let Some(u) = prev[v] {
            if u >= n && v < n {
                bottleneck = bottleneck.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        if !bottleneck.is_finite() || bottleneck <= MASS_EPS {
            break;
        }
        // Apply the augmentation.
        let mut v = target;
        while let Some(u) = prev[v] {
            if u < n && v >= n {
                flow[u * m + (v - n)] += bottleneck;
            } else if u >= n && v < n {
                flow[v * m + (u - n)] -= bottleneck;
            }
            v = u;
        }
        remaining_supply[head] -= bottleneck;
        remaining_demand[target - n] -= bottleneck;
        // Potential update keeps reduced costs nonnegative; distances are
        // capped at the target's so unreached nodes stay consistent.
        let cap = dist[target];
        for i in 0..n {
            pot_a[i] -= dist[i].min(cap);
        }
        for j in 0..m {
            pot_b[j] -= dist[n + j].min(cap);
        }
    }

    let mut value = 0.0;
    let mut plan = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let f = flow[i * m + j];
            if f > MASS_EPS {
                value += f * costs[i * m + j];
                plan.push((i, j, f));
            }
        }
    }
    OtPlan { value, plan }
}

struct HeapItem {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on dist.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}
