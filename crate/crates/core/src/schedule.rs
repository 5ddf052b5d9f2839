//! Named time series read back from a solved program.

use serde::{Deserialize, Serialize};

use crate::program::{BranchQty, MemberQty, ProgramIr, VarKey};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSchedule {
    pub member: usize,
    /// Appliance power, `[appliance][slot]` (kW).
    pub appliances: Vec<Vec<f64>>,
    pub store_ind: Vec<f64>,
    pub store_host: Vec<f64>,
    pub store_mut: Vec<f64>,
    pub excess: Vec<f64>,
    pub energy_ind: Vec<f64>,
    pub energy_host: Vec<f64>,
    pub energy_mut: Vec<f64>,
    pub load_pos: Vec<f64>,
    pub load_neg: Vec<f64>,
}

impl MemberSchedule {
    /// Virtual (billed) net load `l⁺ − l⁻`.
    pub fn net_load(&self) -> Vec<f64> {
        self.load_pos
            .iter()
            .zip(&self.load_neg)
            .map(|(p, n)| p - n)
            .collect()
    }

    /// Nodal consumption: base load, appliances and own battery (including
    /// energy hosted for others).
    pub fn physical_load(&self, s: &Scenario) -> Vec<f64> {
        let base = &s.prosumers[self.member].base_load_kw;
        (0..base.len())
            .map(|t| {
                base[t]
                    + self.appliances.iter().map(|a| a[t]).sum::<f64>()
                    + self.store_ind[t]
                    + self.store_host[t]
            })
            .collect()
    }

    /// Energy billed by the supplier (kWh).
    pub fn billed_energy(&self, delta_t: f64) -> f64 {
        self.load_pos.iter().map(|l| l.max(0.0) * delta_t).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSchedule {
    pub branch: usize,
    /// Per-unit flows leaving each end, and squared current.
    pub p_from: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_from: Vec<f64>,
    pub q_to: Vec<f64>,
    pub current_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSchedule {
    pub branches: Vec<BranchSchedule>,
    /// Squared voltage magnitudes `[node][slot]` (p.u.²).
    pub voltages: Vec<Vec<f64>>,
    /// Power drawn from the upstream grid (kW).
    pub interface_kw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub members: Vec<MemberSchedule>,
    pub network: Option<NetworkSchedule>,
}

fn series(ir: &ProgramIr, x: &[f64], slots: usize, key: impl Fn(usize) -> VarKey) -> Vec<f64> {
    (0..slots).map(|t| x[ir.layout.at(key(t))]).collect()
}

impl MemberSchedule {
    pub fn extract(s: &Scenario, ir: &ProgramIr, x: &[f64], m: usize) -> MemberSchedule {
        let slots = s.slots();
        let q = |qty| series(ir, x, slots, |t| VarKey::member(m, qty, t));
        MemberSchedule {
            member: m,
            appliances: (0..s.prosumers[m].appliances.len())
                .map(|a| series(ir, x, slots, |t| VarKey::appliance(m, a, t)))
                .collect(),
            store_ind: q(MemberQty::StoreInd),
            store_host: q(MemberQty::StoreHost),
            store_mut: q(MemberQty::StoreMut),
            excess: q(MemberQty::Excess),
            energy_ind: q(MemberQty::EnergyInd),
            energy_host: q(MemberQty::EnergyHost),
            energy_mut: q(MemberQty::EnergyMut),
            load_pos: q(MemberQty::LoadPos),
            load_neg: q(MemberQty::LoadNeg),
        }
    }
}

impl NetworkSchedule {
    pub fn extract(s: &Scenario, ir: &ProgramIr, x: &[f64]) -> NetworkSchedule {
        let slots = s.slots();
        let branches = (0..s.network.branches.len())
            .map(|b| {
                let q = |qty| series(ir, x, slots, |t| VarKey::branch(b, qty, t));
                BranchSchedule {
                    branch: b,
                    p_from: q(BranchQty::PFrom),
                    p_to: q(BranchQty::PTo),
                    q_from: q(BranchQty::QFrom),
                    q_to: q(BranchQty::QTo),
                    current_sq: q(BranchQty::CurrentSq),
                }
            })
            .collect();
        NetworkSchedule {
            branches,
            voltages: (0..s.network.node_count)
                .map(|n| series(ir, x, slots, |t| VarKey::voltage(n, t)))
                .collect(),
            interface_kw: series(ir, x, slots, VarKey::interface),
        }
    }
}

impl Schedule {
    /// Reads every member present in the program and, if modelled, the
    /// network state.
    pub fn extract(s: &Scenario, ir: &ProgramIr, x: &[f64]) -> Schedule {
        let members = (0..s.member_count())
            .filter(|m| ir.layout.col(&VarKey::member(*m, MemberQty::LoadPos, 0)).is_some())
            .map(|m| MemberSchedule::extract(s, ir, x, m))
            .collect();
        let network = ir
            .layout
            .col(&VarKey::interface(0))
            .map(|_| NetworkSchedule::extract(s, ir, x));
        Schedule { members, network }
    }

    /// Physical load of every member, `[member][slot]` (kW). Members are
    /// expected in scenario order.
    pub fn physical_loads(&self, s: &Scenario) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.physical_load(s)).collect()
    }
}
