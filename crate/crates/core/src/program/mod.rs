//! Assembly of the community scheduling problem into a convex program.
//!
//! A [`ProblemSpec`] selects which members take part, whether storage and
//! excess generation may be shared among them, whether the network is
//! modelled, and which objective applies. [`build_program`] turns it into a
//! [`ProgramIr`] that any of the solver front-ends can consume.

mod build;
mod ir;
mod layout;

use std::collections::BTreeMap;

pub use build::{
    build_community_program, build_coalition_program, build_coupling_block,
    build_distflow_block, build_fixed_rate_program, build_member_block,
    build_network_evaluation, build_objective, build_program, build_selfish_program,
    coalition_spec, community_spec,
};
pub use ir::{IrError, LinearRow, ProgramIr, RotatedCone};
pub use layout::{BranchQty, MemberQty, VarKey, VarKind, VariableLayout};

/// Which cost terms enter a community objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostScope {
    /// Commodity, upstream and local grid costs.
    Full,
    /// Commodity costs only; no network variables are created.
    CommodityOnly,
}

/// Individual (non-cooperative) strategy of a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Minimize own commodity cost.
    Co,
    /// Own commodity cost plus a quadratic penalty on own net load, mirroring
    /// the upstream fee.
    Par,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Community(CostScope),
    /// `rate_adder` (€/kWh) is added to every commodity price.
    Selfish { strategy: Strategy, rate_adder: f64 },
    /// Minimize network losses; used to evaluate a pinned schedule.
    NetworkLosses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    /// Global indices of the participating members, ascending.
    pub members: Vec<usize>,
    /// Storage hosting and excess-generation sharing among `members`.
    pub sharing: bool,
    pub network: bool,
    pub objective: ObjectiveSpec,
    /// Variables fixed to given values.
    pub pins: BTreeMap<VarKey, f64>,
}
