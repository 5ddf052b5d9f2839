use serde::Serialize;

use super::Solution;
use crate::program::{MemberQty, ProgramIr, VarKey, VarKind};

/// Branches carrying less active power than this (p.u.) are exempt from the
/// cone tightness check: their current is not determined by the objective.
pub const TIGHTNESS_FLOW_THRESHOLD: f64 = 1e-4;

/// Residuals of the conditions a relaxed optimum must meet to be physical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicalityReport {
    /// Largest `w·phi − (p² + q²)` over branches with `|p| > 1e-4` p.u.
    pub cone_residual: f64,
    pub worst_cone: Option<String>,
    /// Largest `l⁺·l⁻` (kW²).
    pub load_complementarity: f64,
    pub worst_load: Option<String>,
    /// Largest `v·l⁻` (kW²).
    pub sharing_complementarity: f64,
    pub worst_sharing: Option<String>,
    /// Set when either complementarity product exceeds the tolerance.
    pub repair_needed: bool,
}

fn track(best: &mut (f64, Option<String>), value: f64, name: impl FnOnce() -> String) {
    if value > best.0 {
        *best = (value, Some(name()));
    }
}

pub fn verify_physicality(sol: &Solution, ir: &ProgramIr, tol: f64) -> PhysicalityReport {
    let z = &sol.x;
    let lay = &ir.layout;
    let mut cone = (0.0, None);
    for c in &ir.cones {
        if z[c.p].abs() > TIGHTNESS_FLOW_THRESHOLD {
            track(&mut cone, c.slack(z), || c.name.clone());
        }
    }
    let mut load = (0.0, None);
    let mut sharing = (0.0, None);
    for key in lay.keys() {
        if let VarKind::Member {
            member,
            qty: MemberQty::LoadNeg,
        } = key.kind
        {
            let neg = z[lay.at(*key)].max(0.0);
            let pos = z[lay.at(VarKey::member(member, MemberQty::LoadPos, key.slot))].max(0.0);
            let v = z[lay.at(VarKey::member(member, MemberQty::Excess, key.slot))].max(0.0);
            track(&mut load, pos * neg, || format!("m{},t{}", member, key.slot));
            track(&mut sharing, v * neg, || format!("m{},t{}", member, key.slot));
        }
    }
    PhysicalityReport {
        cone_residual: cone.0,
        worst_cone: cone.1,
        load_complementarity: load.0,
        worst_load: load.1,
        sharing_complementarity: sharing.0,
        worst_sharing: sharing.1,
        repair_needed: load.0 > tol || sharing.0 > tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{build_community_program, CostScope};
    use crate::scenario::demo::demo_scenario;
    use crate::solver::Status;

    fn fake(ir: &ProgramIr) -> Solution {
        Solution {
            status: Status::Optimal,
            x: vec![0.0; ir.num_vars()],
            objective: 0.0,
            gap: 0.0,
            relative_gap: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
            trace: vec![],
            diagnosis: vec![],
            checks: None,
        }
    }

    #[test]
    fn all_zero_point_has_zero_residuals() {
        let ir = build_community_program(&demo_scenario(), CostScope::Full);
        let r = verify_physicality(&fake(&ir), &ir, 1e-6);
        assert_eq!(r.cone_residual, 0.0);
        assert_eq!(r.load_complementarity, 0.0);
        assert_eq!(r.sharing_complementarity, 0.0);
        assert!(!r.repair_needed);
    }

    #[test]
    fn excess_on_exporting_member_is_flagged() {
        let ir = build_community_program(&demo_scenario(), CostScope::Full);
        let mut sol = fake(&ir);
        sol.x[ir.layout.at(VarKey::member(1, MemberQty::LoadNeg, 2))] = 0.5;
        sol.x[ir.layout.at(VarKey::member(1, MemberQty::Excess, 2))] = 0.2;
        let r = verify_physicality(&sol, &ir, 1e-6);
        assert!(r.repair_needed);
        assert!((r.sharing_complementarity - 0.1).abs() < 1e-15);
        assert_eq!(r.worst_sharing.as_deref(), Some("m1,t2"));
    }
}
