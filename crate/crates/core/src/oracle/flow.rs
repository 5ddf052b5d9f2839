//! Exact (non-convex) branch-flow solution of a radial network by
//! backward/forward sweep.

use crate::scenario::Network;

/// Steady state of the network for one slot, in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    /// Active power entering each branch at its upstream end.
    pub p_upstream: Vec<f64>,
    pub q_upstream: Vec<f64>,
    /// Squared current magnitude of each branch.
    pub current_sq: Vec<f64>,
    /// Squared voltage magnitude of each node.
    pub voltage_sq: Vec<f64>,
    /// Whether the branch's `from` end is its upstream end.
    pub from_is_upstream: Vec<bool>,
}

impl FlowState {
    /// Active power leaving the branch at its `from` end.
    pub fn p_from(&self, net: &Network, b: usize) -> f64 {
        if self.from_is_upstream[b] {
            self.p_upstream[b]
        } else {
            let (r, _) = net.branch_pu(b);
            -(self.p_upstream[b] - r * self.current_sq[b])
        }
    }

    /// Power drawn at the interface node.
    pub fn interface(&self, net: &Network) -> f64 {
        (0..net.branches.len())
            .filter(|b| {
                let br = &net.branches[*b];
                br.from == 0 || br.to == 0
            })
            .map(|b| self.p_upstream[b])
            .sum()
    }
}

struct Tree {
    /// Nodes in breadth-first order from the root.
    order: Vec<usize>,
    /// Branch connecting each non-root node to its parent.
    up_branch: Vec<Option<usize>>,
    parent: Vec<usize>,
}

fn tree(net: &Network) -> Tree {
    let n = net.node_count;
    let mut up_branch = vec![None; n];
    let mut parent = vec![0; n];
    let mut seen = vec![false; n];
    let mut order = vec![0];
    seen[0] = true;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for (b, br) in net.branches.iter().enumerate() {
            let other = if br.from == u {
                br.to
            } else if br.to == u {
                br.from
            } else {
                continue;
            };
            if !seen[other] {
                seen[other] = true;
                parent[other] = u;
                up_branch[other] = Some(b);
                order.push(other);
            }
        }
    }
    Tree {
        order,
        up_branch,
        parent,
    }
}

/// Solves the branch-flow equations with the root at unit voltage for nodal
/// loads `(p, q)` in per-unit (consumption positive). Returns `None` when
/// the sweep does not converge, i.e. the loading has no solution.
pub fn radial_power_flow(net: &Network, loads: &[(f64, f64)]) -> Option<FlowState> {
    let tr = tree(net);
    let nb = net.branches.len();
    let n = net.node_count;
    let imp: Vec<(f64, f64)> = (0..nb).map(|b| net.branch_pu(b)).collect();
    let mut ell = vec![0.0; nb];
    let mut v = vec![1.0; n];
    let mut p_up = vec![0.0; nb];
    let mut q_up = vec![0.0; nb];
    for _ in 0..500 {
        let mut p_node: Vec<f64> = loads.iter().map(|l| l.0).collect();
        let mut q_node: Vec<f64> = loads.iter().map(|l| l.1).collect();
        for &node in tr.order.iter().skip(1).rev() {
            let b = tr.up_branch[node].expect("non-root nodes have a parent branch");
            let (r, x) = imp[b];
            p_up[b] = p_node[node] + r * ell[b];
            q_up[b] = q_node[node] + x * ell[b];
            let par = tr.parent[node];
            p_node[par] += p_up[b];
            q_node[par] += q_up[b];
        }
        let mut change: f64 = 0.0;
        for &node in tr.order.iter().skip(1) {
            let b = tr.up_branch[node].expect("non-root nodes have a parent branch");
            let (r, x) = imp[b];
            let vp = v[tr.parent[node]];
            if !(vp > 0.0) {
                return None;
            }
            let new_ell = (p_up[b] * p_up[b] + q_up[b] * q_up[b]) / vp;
            let new_v = vp - 2.0 * (r * p_up[b] + x * q_up[b]) + (r * r + x * x) * new_ell;
            change = change
                .max((new_ell - ell[b]).abs() / (1.0 + new_ell))
                .max((new_v - v[node]).abs());
            ell[b] = new_ell;
            v[node] = new_v;
        }
        if !change.is_finite() {
            return None;
        }
        if change < 1e-14 {
            // upstream flows consistent with the converged currents
            let mut p_node: Vec<f64> = loads.iter().map(|l| l.0).collect();
            let mut q_node: Vec<f64> = loads.iter().map(|l| l.1).collect();
            for &node in tr.order.iter().skip(1).rev() {
                let b = tr.up_branch[node].expect("non-root nodes have a parent branch");
                let (r, x) = imp[b];
                p_up[b] = p_node[node] + r * ell[b];
                q_up[b] = q_node[node] + x * ell[b];
                let par = tr.parent[node];
                p_node[par] += p_up[b];
                q_node[par] += q_up[b];
            }
            let from_is_upstream = (0..nb)
                .map(|b| {
                    let br = &net.branches[b];
                    tr.up_branch[br.to] == Some(b)
                })
                .collect();
            return Some(FlowState {
                p_upstream: p_up,
                q_upstream: q_up,
                current_sq: ell,
                voltage_sq: v,
                from_is_upstream,
            });
        }
    }
    None
}
