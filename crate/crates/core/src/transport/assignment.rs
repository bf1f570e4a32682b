//! Exact earth-mover's distance between equal-size uniform clouds,
//! solved as a linear assignment problem.

use super::CostFn;
use crate::error::{Error, Result};

/// `(1/n) * min over permutations sigma of sum_i C(a_i, b_sigma(i))`.
///
/// Uniform weights are implied; unequal sizes are rejected (use
/// [`super::exact_ot_discrete`] for general weighted supports).
pub fn exact_emd_assignment(a: &[Vec<f64>], b: &[Vec<f64>], cost: CostFn) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyDistribution("assignment cloud"));
    }
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "assignment needs equal cloud sizes, got {} and {}; use exact_ot_discrete",
            a.len(),
            b.len()
        )));
    }
    let dim = a[0].len();
    if a.iter().chain(b.iter()).any(|p| p.len() != dim) {
        return Err(Error::invalid("assignment points have mixed dimensions"));
    }
    let n = a.len();
    let mut costs = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            costs[i * n + j] = cost.eval(&a[i], &b[j]);
        }
    }
    Ok(hungarian_min_cost(&costs, n) / n as f64)
}

/// O(n^3) Hungarian algorithm with row/column potentials; returns the
/// minimum total cost of a perfect matching on the `n x n` matrix.
fn hungarian_min_cost(costs: &[f64], n: usize) -> f64 {
    // 1-indexed internals; job[0] is the virtual column.
    let mut pot_row = vec![0.0; n + 1];
    let mut pot_col = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1) * n + (j - 1)] - pot_row[i0] - pot_col[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    pot_row[matched_row[j]] += delta;
                    pot_col[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut total = 0.0;
    for j in 1..=n {
        total += costs[(matched_row[j] - 1) * n + (j - 1)];
    }
    total
}

#[cfg(test)]
pub(crate) fn brute_force_assignment(a: &[Vec<f64>], b: &[Vec<f64>], cost: CostFn) -> f64 {
    fn permute(rest: &mut Vec<usize>, chosen: &mut Vec<usize>, best: &mut f64, a: &[Vec<f64>], b: &[Vec<f64>], cost: CostFn) {
        if rest.is_empty() {
            let total: f64 = chosen
                .iter()
                .enumerate()
                .map(|(i, &j)| cost.eval(&a[i], &b[j]))
                .sum();
            if total < *best {
                *best = total;
            }
            return;
        }
        for k in 0..rest.len() {
            let j = rest.remove(k);
            chosen.push(j);
            permute(rest, chosen, best, a, b, cost);
            chosen.pop();
            rest.insert(k, j);
        }
    }
    let mut best = f64::INFINITY;
    let mut rest: Vec<usize> = (0..a.len()).collect();
    permute(&mut rest, &mut Vec::new(), &mut best, a, b, cost);
    best / a.len() as f64
}
