//! The three cost categories of a community schedule: supplier commodity
//! costs, the upstream grid fee and the local grid fee (losses and line
//! flows).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::ProgramIr;
use crate::scenario::Scenario;
use crate::schedule::{NetworkSchedule, Schedule};
use crate::solver::{Solution, Status};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("net load has {load} slots but the price vector has {price}")]
    LengthMismatch { load: usize, price: usize },
    #[error("cannot cost a solution with status {0:?}")]
    NotOptimal(Status),
}

/// Supplier bill for a net-load series: only imports are charged.
pub fn commodity_cost(load_kw: &[f64], price: &[f64], delta_t: f64) -> Result<f64, CostError> {
    if load_kw.len() != price.len() {
        return Err(CostError::LengthMismatch {
            load: load_kw.len(),
            price: price.len(),
        });
    }
    Ok(load_kw
        .iter()
        .zip(price)
        .map(|(l, g)| g * delta_t * l.max(0.0))
        .sum())
}

/// Quadratic fee on the energy exchanged with the upstream grid, charged
/// symmetrically for imports and exports.
pub fn upstream_cost(p0_kw: &[f64], gamma_up: f64, delta_t: f64) -> f64 {
    p0_kw.iter().map(|p| gamma_up * (delta_t * p).powi(2)).sum()
}

/// Flows on one branch over the horizon (kW), measured leaving each end.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFlows {
    pub from_kw: Vec<f64>,
    pub to_kw: Vec<f64>,
    pub length_km: f64,
}

/// Local fee: `(loss part, flow part)`.
pub fn local_grid_cost(
    flows: &[BranchFlows],
    gamma_loss: f64,
    gamma_flow: f64,
    delta_t: f64,
) -> (f64, f64) {
    let mut loss = 0.0;
    let mut flow = 0.0;
    for b in flows {
        for (f, t) in b.from_kw.iter().zip(&b.to_kw) {
            loss += delta_t * gamma_loss * (f + t);
            flow += delta_t * gamma_flow * b.length_km * f.abs();
        }
    }
    (loss, flow)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkCosts {
    pub upstream: f64,
    pub local_loss: f64,
    pub local_flow: f64,
}

impl NetworkCosts {
    pub fn total(&self) -> f64 {
        self.upstream + self.local_loss + self.local_flow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Scenario indices of the members covered.
    pub members: Vec<usize>,
    /// Commodity cost of each member in `members`.
    pub member_commodity: Vec<f64>,
    pub commodity: f64,
    /// Absent when the network was not modelled.
    pub network: Option<NetworkCosts>,
    pub total: f64,
}

impl CostBreakdown {
    /// Grid part of the total (upstream plus local).
    pub fn grid(&self) -> f64 {
        self.network.map_or(0.0, |n| n.total())
    }
}

pub fn network_costs(s: &Scenario, net: &NetworkSchedule) -> NetworkCosts {
    let base = s.network.power_base_kva;
    let flows: Vec<BranchFlows> = net
        .branches
        .iter()
        .map(|b| BranchFlows {
            from_kw: b.p_from.iter().map(|p| p * base).collect(),
            to_kw: b.p_to.iter().map(|p| p * base).collect(),
            length_km: s.network.branches[b.branch].length_km,
        })
        .collect();
    let tar = &s.tariffs;
    let (local_loss, local_flow) = local_grid_cost(&flows, tar.gamma_loss, tar.gamma_flow, s.delta_t());
    NetworkCosts {
        upstream: upstream_cost(&net.interface_kw, tar.gamma_up, s.delta_t()),
        local_loss,
        local_flow,
    }
}

/// Costs of a schedule. Commodity costs use the billed (virtual) net load.
pub fn schedule_breakdown(s: &Scenario, schedule: &Schedule) -> CostBreakdown {
    let dt = s.delta_t();
    let members: Vec<usize> = schedule.members.iter().map(|m| m.member).collect();
    let member_commodity: Vec<f64> = schedule
        .members
        .iter()
        .map(|m| {
            commodity_cost(&m.load_pos, s.prices(m.member), dt)
                .expect("schedule follows the scenario horizon")
        })
        .collect();
    let commodity = member_commodity.iter().sum::<f64>();
    let network = schedule.network.as_ref().map(|n| network_costs(s, n));
    let total = commodity + network.map_or(0.0, |n| n.total());
    CostBreakdown {
        members,
        member_commodity,
        commodity,
        network,
        total,
    }
}

/// Cost breakdown of an optimal solution. Its total equals the objective
/// minus the regularization on negative net load.
pub fn breakdown(sol: &Solution, ir: &ProgramIr, s: &Scenario) -> Result<CostBreakdown, CostError> {
    if !sol.is_optimal() {
        return Err(CostError::NotOptimal(sol.status));
    }
    Ok(schedule_breakdown(s, &Schedule::extract(s, ir, &sol.x)))
}

/// `ε·Σ l⁻` part of an objective.
pub fn regularization(s: &Scenario, schedule: &Schedule) -> f64 {
    s.epsilon()
        * schedule
            .members
            .iter()
            .flat_map(|m| m.load_neg.iter())
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commodity_examples() {
        assert!((commodity_cost(&[2.0, -1.0], &[0.1, 0.1], 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(commodity_cost(&[0.0, 0.0], &[0.3, 0.1], 1.0).unwrap(), 0.0);
        assert!((commodity_cost(&[1.0, 1.0], &[0.05, 0.2], 0.5).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(
            commodity_cost(&[1.0], &[0.1, 0.2], 1.0),
            Err(CostError::LengthMismatch { load: 1, price: 2 })
        );
    }

    #[test]
    fn upstream_examples() {
        assert_eq!(upstream_cost(&[0.0], 0.01, 1.0), 0.0);
        assert!((upstream_cost(&[2.0], 0.01, 1.0) - 0.04).abs() < 1e-15);
        assert!((upstream_cost(&[-2.0], 0.01, 1.0) - 0.04).abs() < 1e-15);
        assert!((upstream_cost(&[3.0], 0.02, 0.5) - 0.045).abs() < 1e-15);
    }

    #[test]
    fn local_examples() {
        let one = BranchFlows {
            from_kw: vec![1.0],
            to_kw: vec![-0.9],
            length_km: 1.0,
        };
        let (loss, flow) = local_grid_cost(std::slice::from_ref(&one), 0.1, 0.1, 1.0);
        assert!((loss + flow - 0.11).abs() < 1e-12);
        let reversed = BranchFlows {
            from_kw: vec![-1.0],
            to_kw: vec![1.1],
            length_km: 1.0,
        };
        let (l2, f2) = local_grid_cost(&[reversed], 0.1, 0.1, 1.0);
        assert!((l2 - loss).abs() < 1e-15);
        assert!((f2 - flow).abs() < 1e-15);
        let zero = BranchFlows {
            from_kw: vec![0.0],
            to_kw: vec![0.0],
            length_km: 2.0,
        };
        assert_eq!(local_grid_cost(&[zero], 0.3, 0.2, 1.0), (0.0, 0.0));
    }
}
