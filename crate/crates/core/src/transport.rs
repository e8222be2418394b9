//! Exact balanced transportation problems by the primal network simplex.
//!
//! Given supplies `a` (m rows), demands `b` (n columns) and a dense row-major
//! cost matrix, finds a flow `x >= 0` with row sums `a` and column sums `b`
//! minimising `sum c_ij x_ij`. The basis is kept as a spanning tree over the
//! `m + n` row/column nodes; potentials `u_i + v_j = c_ij` on basic cells
//! give reduced costs for pricing.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    /// Primal objective `sum c_ij x_ij`.
    pub cost: f64,
    /// Dual objective `sum a_i u_i + sum b_j v_j`.
    pub dual_objective: f64,
    /// Basic cells `(row, column, flow)`.
    pub flows: Vec<(usize, usize, f64)>,
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
    pub iterations: usize,
}

impl TransportSolution {
    pub fn optimality_gap(&self) -> f64 {
        (self.cost - self.dual_objective).abs()
    }
}

struct Basis {
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    // Node adjacency: node -> basis slots. Rows are 0..m, columns m..m+n.
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn other(&self, slot: usize, node: usize) -> usize {
        let (i, j) = self.cells[slot];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    fn potentials(&self, cost: &[f64], u: &mut [f64], v: &mut [f64]) {
        let mut seen = vec![false; self.m + self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &slot in &self.adj[node] {
                let next = self.other(slot, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.cells[slot];
                let c = cost[i * self.n + j];
                if next >= self.m {
                    v[j] = c - u[i];
                } else {
                    u[i] = c - v[j];
                }
                stack.push(next);
            }
        }
    }

    /// Tree path from `from` to `to` as a list of basis slots.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let total = self.m + self.n;
        let mut parent_slot = vec![usize::MAX; total];
        let mut seen = vec![false; total];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(node) = stack.pop() {
            if node == to {
                break;
            }
            for &slot in &self.adj[node] {
                let next = self.other(slot, node);
                if !seen[next] {
                    seen[next] = true;
                    parent_slot[next] = slot;
                    stack.push(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = to;
        while node != from {
            let slot = parent_slot[node];
            path.push(slot);
            node = self.other(slot, node);
        }
        path.reverse();
        path
    }
}

/// Solves the transportation problem. Supplies and demands must be
/// nonnegative with equal totals up to `1e-9` relative; demands are rescaled
/// to match the supply total exactly.
pub fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 {
        return Err(Error::Solver("empty transportation problem".into()));
    }
    if cost.len() != m * n {
        return Err(Error::LengthMismatch {
            what: "cost matrix",
            expected: m * n,
            got: cost.len(),
        });
    }
    if supply.iter().chain(demand).any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Solver(
            "supplies and demands must be finite and nonnegative".into(),
        ));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Solver("non-finite cost".into()));
    }
    let total_a: f64 = supply.iter().sum();
    let total_b: f64 = demand.iter().sum();
    if (total_a - total_b).abs() > 1e-9 * total_a.max(total_b).max(1e-300) {
        return Err(Error::Solver(format!(
            "unbalanced problem: supply {total_a} vs demand {total_b}"
        )));
    }
    let scale = if total_b > 0.0 { total_a / total_b } else { 1.0 };
    let demand: Vec<f64> = demand.iter().map(|b| b * scale).collect();

    let mut basis = initial_basis(supply, &demand, cost, m, n);
    let cost_scale = cost.iter().fold(1.0f64, |s, c| s.max(c.abs()));
    let tol = 1e-12 * cost_scale;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let mut iterations = 0;
    let mut degenerate_streak = 0usize;

    loop {
        basis.potentials(cost, &mut u, &mut v);
        // Dantzig pricing; Bland's first-negative rule after long degenerate runs.
        let bland = degenerate_streak > m + n;
        let mut entering = None;
        let mut best = -tol;
        'price: for i in 0..m {
            let row = &cost[i * n..(i + 1) * n];
            for j in 0..n {
                let r = row[j] - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'price;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::Solver(format!(
                "network simplex did not converge in {max_iter} pivots"
            )));
        }

        // Cycle: entering cell (+), then alternating (-, +, ...) along the
        // tree path from row ei to column ej.
        let path = basis.path(ei, m + ej);
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &slot) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let f = basis.flow[slot];
                if f < theta || (f == theta && slot < leaving) {
                    theta = f;
                    leaving = slot;
                }
            }
        }
        let theta = theta.max(0.0);
        degenerate_streak = if theta == 0.0 { degenerate_streak + 1 } else { 0 };
        for (pos, &slot) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[slot] -= theta;
            } else {
                basis.flow[slot] += theta;
            }
        }
        basis.flow[leaving] = 0.0;

        let (li, lj) = basis.cells[leaving];
        basis.adj[li].retain(|&s| s != leaving);
        basis.adj[m + lj].retain(|&s| s != leaving);
        basis.cells[leaving] = (ei, ej);
        basis.flow[leaving] = theta;
        basis.adj[ei].push(leaving);
        basis.adj[m + ej].push(leaving);
    }

    let flows: Vec<(usize, usize, f64)> = basis
        .cells
        .iter()
        .zip(&basis.flow)
        .map(|(&(i, j), &f)| (i, j, f.max(0.0)))
        .collect();
    let cost_value = flows.iter().map(|&(i, j, f)| f * cost[i * n + j]).sum();
    let dual_objective =
        supply.iter().zip(&u).map(|(a, p)| a * p).sum::<f64>() + demand.iter().zip(&v).map(|(b, p)| b * p).sum::<f64>();
    Ok(TransportSolution {
        cost: cost_value,
        dual_objective,
        flows,
        row_potentials: u,
        col_potentials: v,
        iterations,
    })
}

/// Least-cost greedy start. Each allocation retires exactly one row or
/// column (both only on the final one), so the m + n - 1 allocated cells
/// always form a spanning tree.
fn initial_basis(supply: &[f64], demand: &[f64], cost: &[f64], m: usize, n: usize) -> Basis {
    let mut order: Vec<usize> = (0..m * n).collect();
    order.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)));
    let mut rs = supply.to_vec();
    let mut cs = demand.to_vec();
    let mut row_done = vec![false; m];
    let mut col_done = vec![false; n];
    let mut rows_left = m;
    let mut cols_left = n;
    let mut basis = Basis {
        m,
        n,
        cells: Vec::with_capacity(m + n - 1),
        flow: Vec::with_capacity(m + n - 1),
        adj: vec![Vec::new(); m + n],
    };
    for idx in order {
        let (i, j) = (idx / n, idx % n);
        if row_done[i] || col_done[j] {
            continue;
        }
        let q = rs[i].min(cs[j]);
        rs[i] -= q;
        cs[j] -= q;
        let slot = basis.cells.len();
        basis.cells.push((i, j));
        basis.flow.push(q);
        basis.adj[i].push(slot);
        basis.adj[m + j].push(slot);
        if rows_left == 1 && cols_left == 1 {
            break;
        }
        let retire_row = if rows_left == 1 {
            false
        } else if cols_left == 1 {
            true
        } else {
            rs[i] <= cs[j]
        };
        if retire_row {
            row_done[i] = true;
            rows_left -= 1;
        } else {
            col_done[j] = true;
            cols_left -= 1;
        }
    }
    debug_assert_eq!(basis.cells.len(), m + n - 1);
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        // Crossing is expensive; optimal plan is the identity coupling.
        let sol = solve(&[0.5, 0.5], &[0.5, 0.5], &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(sol.cost.abs() < 1e-15);
        assert!(sol.optimality_gap() < 1e-12);
    }

    #[test]
    fn brute_force_permutations() {
        // Uniform 4x4 assignment: optimum is attained at a permutation.
        let cost = [
            4.0, 1.0, 3.0, 2.0, //
            2.0, 0.0, 5.0, 3.0, //
            3.0, 2.0, 2.0, 4.0, //
            1.0, 6.0, 3.0, 1.0,
        ];
        let mut best = f64::INFINITY;
        let perms = [
            [0, 1, 2, 3],
            [0, 1, 3, 2],
            [0, 2, 1, 3],
            [0, 2, 3, 1],
            [0, 3, 1, 2],
            [0, 3, 2, 1],
            [1, 0, 2, 3],
            [1, 0, 3, 2],
            [1, 2, 0, 3],
            [1, 2, 3, 0],
            [1, 3, 0, 2],
            [1, 3, 2, 0],
            [2, 0, 1, 3],
            [2, 0, 3, 1],
            [2, 1, 0, 3],
            [2, 1, 3, 0],
            [2, 3, 0, 1],
            [2, 3, 1, 0],
            [3, 0, 1, 2],
            [3, 0, 2, 1],
            [3, 1, 0, 2],
            [3, 1, 2, 0],
            [3, 2, 0, 1],
            [3, 2, 1, 0],
        ];
        for p in perms {
            let c: f64 = (0..4).map(|i| cost[i * 4 + p[i]]).sum::<f64>() / 4.0;
            best = best.min(c);
        }
        let sol = solve(&[0.25; 4], &[0.25; 4], &cost).unwrap();
        assert!((sol.cost - best).abs() < 1e-14, "{} vs {best}", sol.cost);
        assert!(sol.optimality_gap() < 1e-12);
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(solve(&[1.0], &[0.5], &[1.0]).is_err());
        assert!(solve(&[1.0, -1.0], &[0.0], &[1.0, 1.0]).is_err());
    }
}
