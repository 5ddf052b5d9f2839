use std::collections::{BTreeMap, BTreeSet};

use super::{
    BranchQty, CostScope, LinearRow, MemberQty, ObjectiveSpec, ProblemSpec, ProgramIr,
    RotatedCone, Strategy, VarKey, VariableLayout,
};
use crate::scenario::{Scenario, TerminalPolicy};

/// Source of the physical load at each member's node.
#[derive(Debug, Clone, Copy)]
enum NodeLoads<'a> {
    /// Loads follow the member decision variables in the program.
    Scheduled,
    /// Loads are given data, in kW, indexed `[member][slot]`.
    Fixed(&'a [Vec<f64>]),
}

fn push_member_columns(layout: &mut VariableLayout, s: &Scenario, m: usize) {
    let slots = s.slots();
    for a in 0..s.prosumers[m].appliances.len() {
        for t in 0..slots {
            layout.push(VarKey::appliance(m, a, t));
        }
    }
    for q in MemberQty::ALL {
        for t in 0..slots {
            layout.push(VarKey::member(m, q, t));
        }
    }
}

fn push_network_columns(layout: &mut VariableLayout, s: &Scenario) {
    let slots = s.slots();
    for b in 0..s.network.branches.len() {
        for q in BranchQty::ALL {
            for t in 0..slots {
                layout.push(VarKey::branch(b, q, t));
            }
        }
    }
    for node in 0..s.network.node_count {
        for t in 0..slots {
            layout.push(VarKey::voltage(node, t));
        }
    }
    for t in 0..slots {
        layout.push(VarKey::interface(t));
    }
}

fn lower_bound_zero(ir: &mut ProgramIr, key: VarKey) {
    let col = ir.layout.at(key);
    ir.inequalities
        .push(LinearRow::new(format!("lb:{key}"), vec![(col, -1.0)], 0.0));
}

fn fix(ir: &mut ProgramIr, prefix: &str, key: VarKey, value: f64) {
    let col = ir.layout.at(key);
    ir.equalities
        .push(LinearRow::new(format!("{prefix}:{key}"), vec![(col, 1.0)], value));
}

/// Constraints private to member `m`: virtual net-load definition with its
/// positive/negative split, appliance energy and consent, battery dynamics
/// for the individual, hosted and mutualized storage roles, and the state of
/// charge and power limits of the member's own battery.
pub fn build_member_block(ir: &mut ProgramIr, s: &Scenario, m: usize, sharing: bool) {
    let p = &s.prosumers[m];
    let slots = s.slots();
    let dt = s.delta_t();
    let lay = &ir.layout;
    let mq = |q, t| lay.at(VarKey::member(m, q, t));

    for t in 0..slots {
        let mut terms = vec![
            (mq(MemberQty::LoadPos, t), 1.0),
            (mq(MemberQty::LoadNeg, t), -1.0),
        ];
        for a in 0..p.appliances.len() {
            terms.push((lay.at(VarKey::appliance(m, a, t)), -1.0));
        }
        terms.push((mq(MemberQty::StoreInd, t), -1.0));
        terms.push((mq(MemberQty::Excess, t), 1.0));
        terms.push((mq(MemberQty::StoreMut, t), -1.0));
        ir.equalities.push(LinearRow::new(
            format!("netload[m{m},t{t}]"),
            terms,
            p.base_load_kw[t],
        ));
    }

    for (a, app) in p.appliances.iter().enumerate() {
        let x = |t| lay.at(VarKey::appliance(m, a, t));
        let terms = (0..slots)
            .filter(|t| app.permitted[*t])
            .map(|t| (x(t), dt))
            .collect();
        ir.equalities.push(LinearRow::new(
            format!("energy[m{m},a{a}]"),
            terms,
            app.energy_kwh,
        ));
        for t in 0..slots {
            if app.permitted[t] {
                ir.inequalities.push(LinearRow::new(
                    format!("lb:{}", VarKey::appliance(m, a, t)),
                    vec![(x(t), -1.0)],
                    0.0,
                ));
                ir.inequalities.push(LinearRow::new(
                    format!("ub:{}", VarKey::appliance(m, a, t)),
                    vec![(x(t), 1.0)],
                    app.max_power_kw,
                ));
            } else {
                ir.equalities.push(LinearRow::new(
                    format!("forbid[m{m},a{a},t{t}]"),
                    vec![(x(t), 1.0)],
                    0.0,
                ));
            }
        }
    }

    let roles = [
        ("soc_ind", MemberQty::EnergyInd, MemberQty::StoreInd),
        ("soc_host", MemberQty::EnergyHost, MemberQty::StoreHost),
        ("soc_mut", MemberQty::EnergyMut, MemberQty::StoreMut),
    ];
    let initial = p.battery.as_ref().map_or(0.0, |b| b.initial_energy_kwh);
    for (label, energy, power) in roles {
        for t in 0..slots {
            let mut terms = vec![(mq(energy, t), 1.0)];
            if t > 0 {
                terms.push((mq(energy, t - 1), -1.0));
            }
            terms.push((mq(power, t), -dt));
            let rhs = if t == 0 && energy == MemberQty::EnergyInd {
                initial
            } else {
                0.0
            };
            ir.equalities
                .push(LinearRow::new(format!("{label}[m{m},t{t}]"), terms, rhs));
        }
    }

    for t in 0..slots {
        for q in [MemberQty::Excess, MemberQty::LoadPos, MemberQty::LoadNeg, MemberQty::EnergyMut] {
            lower_bound_zero(ir, VarKey::member(m, q, t));
        }
    }

    let mut fixed = BTreeSet::new();
    match &p.battery {
        Some(b) => {
            let lay = &ir.layout;
            let mq = |q, t| lay.at(VarKey::member(m, q, t));
            for t in 0..slots {
                ir.inequalities.push(LinearRow::new(
                    format!("lb:{}", VarKey::member(m, MemberQty::EnergyInd, t)),
                    vec![(mq(MemberQty::EnergyInd, t), -1.0)],
                    0.0,
                ));
                ir.inequalities.push(LinearRow::new(
                    format!("lb:{}", VarKey::member(m, MemberQty::EnergyHost, t)),
                    vec![(mq(MemberQty::EnergyHost, t), -1.0)],
                    0.0,
                ));
                ir.inequalities.push(LinearRow::new(
                    format!("capacity[m{m},t{t}]"),
                    vec![
                        (mq(MemberQty::EnergyInd, t), 1.0),
                        (mq(MemberQty::EnergyHost, t), 1.0),
                    ],
                    b.capacity_kwh,
                ));
                ir.inequalities.push(LinearRow::new(
                    format!("charge[m{m},t{t}]"),
                    vec![
                        (mq(MemberQty::StoreInd, t), 1.0),
                        (mq(MemberQty::StoreHost, t), 1.0),
                    ],
                    b.max_charge_kw,
                ));
                ir.inequalities.push(LinearRow::new(
                    format!("discharge[m{m},t{t}]"),
                    vec![
                        (mq(MemberQty::StoreInd, t), -1.0),
                        (mq(MemberQty::StoreHost, t), -1.0),
                    ],
                    b.max_discharge_kw,
                ));
            }
            if b.terminal == TerminalPolicy::ReturnToInitial && slots > 0 {
                let last = slots - 1;
                ir.equalities.push(LinearRow::new(
                    format!("terminal[m{m}]"),
                    vec![(mq(MemberQty::EnergyInd, last), 1.0)],
                    b.initial_energy_kwh,
                ));
                ir.equalities.push(LinearRow::new(
                    format!("terminal_host[m{m}]"),
                    vec![(mq(MemberQty::EnergyHost, last), 1.0)],
                    0.0,
                ));
            }
        }
        None => {
            for q in [
                MemberQty::StoreInd,
                MemberQty::StoreHost,
                MemberQty::EnergyInd,
                MemberQty::EnergyHost,
            ] {
                fixed.insert(q);
            }
        }
    }
    if !sharing {
        for q in [
            MemberQty::StoreHost,
            MemberQty::StoreMut,
            MemberQty::Excess,
            MemberQty::EnergyHost,
            MemberQty::EnergyMut,
        ] {
            fixed.insert(q);
        }
    }
    for q in fixed {
        for t in 0..slots {
            fix(ir, "fix", VarKey::member(m, q, t), 0.0);
        }
    }
}

/// Community-wide sharing rules among `members`: mutualized storage must be
/// hosted somewhere, and shared excess cannot exceed what members export.
pub fn build_coupling_block(ir: &mut ProgramIr, s: &Scenario, members: &[usize]) {
    let lay = &ir.layout;
    for t in 0..s.slots() {
        let mq = |m, q| lay.at(VarKey::member(m, q, t));
        let mut balance = Vec::new();
        let mut pool = Vec::new();
        for &m in members {
            balance.push((mq(m, MemberQty::StoreMut), 1.0));
            balance.push((mq(m, MemberQty::StoreHost), -1.0));
            pool.push((mq(m, MemberQty::Excess), 1.0));
            pool.push((mq(m, MemberQty::LoadNeg), -1.0));
        }
        ir.equalities
            .push(LinearRow::new(format!("mut_balance[t{t}]"), balance, 0.0));
        ir.inequalities
            .push(LinearRow::new(format!("pool[t{t}]"), pool, 0.0));
    }
}

fn distflow_slot(ir: &mut ProgramIr, s: &Scenario, t: usize, loads: NodeLoads<'_>) {
    let net = &s.network;
    let base = net.power_base_kva;
    let lay = &ir.layout;
    let bq = |b, q| lay.at(VarKey::branch(b, q, t));
    let at_node = s.member_at_node();

    for node in 0..net.node_count {
        let mut p_terms = Vec::new();
        let mut q_terms = Vec::new();
        for (b, br) in net.branches.iter().enumerate() {
            if br.from == node {
                p_terms.push((bq(b, BranchQty::PFrom), 1.0));
                q_terms.push((bq(b, BranchQty::QFrom), 1.0));
            }
            if br.to == node {
                p_terms.push((bq(b, BranchQty::PTo), 1.0));
                q_terms.push((bq(b, BranchQty::QTo), 1.0));
            }
        }
        if node == 0 {
            p_terms.push((lay.at(VarKey::interface(t)), -1.0 / base));
            ir.equalities
                .push(LinearRow::new(format!("balance_p[n0,t{t}]"), p_terms, 0.0));
            continue;
        }
        let mut p_rhs = 0.0;
        let mut q_rhs = 0.0;
        if let Some(m) = at_node[node] {
            let pr = &s.prosumers[m];
            let qd = pr.reactive_load_kvar()[t];
            match loads {
                NodeLoads::Scheduled => {
                    p_rhs = -pr.base_load_kw[t] / base;
                    for a in 0..pr.appliances.len() {
                        p_terms.push((lay.at(VarKey::appliance(m, a, t)), 1.0 / base));
                    }
                    p_terms.push((lay.at(VarKey::member(m, MemberQty::StoreInd, t)), 1.0 / base));
                    p_terms.push((lay.at(VarKey::member(m, MemberQty::StoreHost, t)), 1.0 / base));
                }
                NodeLoads::Fixed(kw) => p_rhs = -kw[m][t] / base,
            }
            q_rhs = -qd / base;
        }
        ir.equalities.push(LinearRow::new(
            format!("balance_p[n{node},t{t}]"),
            p_terms,
            p_rhs,
        ));
        ir.equalities.push(LinearRow::new(
            format!("balance_q[n{node},t{t}]"),
            q_terms,
            q_rhs,
        ));
    }

    for (b, br) in net.branches.iter().enumerate() {
        let (r, x) = net.branch_pu(b);
        let w_from = lay.at(VarKey::voltage(br.from, t));
        let w_to = lay.at(VarKey::voltage(br.to, t));
        let phi = bq(b, BranchQty::CurrentSq);
        ir.equalities.push(LinearRow::new(
            format!("loss_p[b{b},t{t}]"),
            vec![(bq(b, BranchQty::PFrom), 1.0), (bq(b, BranchQty::PTo), 1.0), (phi, -r)],
            0.0,
        ));
        ir.equalities.push(LinearRow::new(
            format!("loss_q[b{b},t{t}]"),
            vec![(bq(b, BranchQty::QFrom), 1.0), (bq(b, BranchQty::QTo), 1.0), (phi, -x)],
            0.0,
        ));
        ir.equalities.push(LinearRow::new(
            format!("voltage_drop[b{b},t{t}]"),
            vec![
                (w_to, 1.0),
                (w_from, -1.0),
                (bq(b, BranchQty::PFrom), 2.0 * r),
                (bq(b, BranchQty::QFrom), 2.0 * x),
                (phi, -(r * r + x * x)),
            ],
            0.0,
        ));
        ir.equalities.push(LinearRow::new(
            format!("flow_split[b{b},t{t}]"),
            vec![
                (bq(b, BranchQty::PFrom), 1.0),
                (bq(b, BranchQty::FlowPos), -1.0),
                (bq(b, BranchQty::FlowNeg), 1.0),
            ],
            0.0,
        ));
        ir.cones.push(RotatedCone {
            name: format!("cone[b{b},t{t}]"),
            p: bq(b, BranchQty::PFrom),
            q: bq(b, BranchQty::QFrom),
            w: w_from,
            phi,
        });
    }
    for b in 0..net.branches.len() {
        lower_bound_zero(ir, VarKey::branch(b, BranchQty::FlowPos, t));
        lower_bound_zero(ir, VarKey::branch(b, BranchQty::FlowNeg, t));
    }

    fix(ir, "slack_bus", VarKey::voltage(0, t), 1.0);
    if let Some([lo, hi]) = net.voltage_bounds_pu2 {
        for node in 1..net.node_count {
            let w = ir.layout.at(VarKey::voltage(node, t));
            ir.inequalities.push(LinearRow::new(
                format!("v_min[n{node},t{t}]"),
                vec![(w, -1.0)],
                -lo,
            ));
            ir.inequalities.push(LinearRow::new(
                format!("v_max[n{node},t{t}]"),
                vec![(w, 1.0)],
                hi,
            ));
        }
    }
}

/// Relaxed branch-flow model of the radial network for slot `t`, with nodal
/// physical loads taken from the member variables.
pub fn build_distflow_block(ir: &mut ProgramIr, s: &Scenario, t: usize) {
    distflow_slot(ir, s, t, NodeLoads::Scheduled);
}

fn add_commodity(ir: &mut ProgramIr, s: &Scenario, members: &[usize], adder: f64) {
    let dt = s.delta_t();
    let eps = s.epsilon();
    for &m in members {
        let prices = s.prices(m);
        for t in 0..s.slots() {
            let pos = ir.layout.at(VarKey::member(m, MemberQty::LoadPos, t));
            let neg = ir.layout.at(VarKey::member(m, MemberQty::LoadNeg, t));
            ir.linear[pos] += dt * (prices[t] + adder);
            ir.linear[neg] += eps;
        }
    }
}

fn add_network_costs(ir: &mut ProgramIr, s: &Scenario) {
    let dt = s.delta_t();
    let base = s.network.power_base_kva;
    let tar = &s.tariffs;
    for t in 0..s.slots() {
        let p0 = ir.layout.at(VarKey::interface(t));
        ir.quadratic[p0] += tar.gamma_up * dt * dt;
        for (b, br) in s.network.branches.iter().enumerate() {
            let col = |q| ir.layout.at(VarKey::branch(b, q, t));
            let (pf, pt, pp, pn) = (
                col(BranchQty::PFrom),
                col(BranchQty::PTo),
                col(BranchQty::FlowPos),
                col(BranchQty::FlowNeg),
            );
            ir.linear[pf] += dt * tar.gamma_loss * base;
            ir.linear[pt] += dt * tar.gamma_loss * base;
            ir.linear[pp] += dt * tar.gamma_flow * br.length_km * base;
            ir.linear[pn] += dt * tar.gamma_flow * br.length_km * base;
        }
    }
}

fn add_loss_objective(ir: &mut ProgramIr, s: &Scenario) {
    for t in 0..s.slots() {
        for b in 0..s.network.branches.len() {
            let (r, _) = s.network.branch_pu(b);
            let phi = ir.layout.at(VarKey::branch(b, BranchQty::CurrentSq, t));
            // a small floor keeps the current determined on lossless lines
            ir.linear[phi] += r + 1e-6;
        }
    }
}

/// Objective coefficients for the requested cost model.
pub fn build_objective(ir: &mut ProgramIr, s: &Scenario, spec: &ProblemSpec) {
    match &spec.objective {
        ObjectiveSpec::Community(scope) => {
            add_commodity(ir, s, &spec.members, 0.0);
            if *scope == CostScope::Full {
                add_network_costs(ir, s);
            }
        }
        ObjectiveSpec::Selfish {
            strategy,
            rate_adder,
        } => {
            add_commodity(ir, s, &spec.members, *rate_adder);
            if *strategy == Strategy::Par {
                let weight = s.tariffs.gamma_up * s.delta_t() * s.delta_t();
                for &m in &spec.members {
                    for t in 0..s.slots() {
                        for q in [MemberQty::LoadPos, MemberQty::LoadNeg] {
                            let c = ir.layout.at(VarKey::member(m, q, t));
                            ir.quadratic[c] += weight;
                        }
                    }
                }
            }
        }
        ObjectiveSpec::NetworkLosses => add_loss_objective(ir, s),
    }
}

/// Assembles the program described by `spec`.
///
/// # Panics
/// If the network is requested for a strict subset of the members, since
/// the nodal balance needs every member's load.
pub fn build_program(s: &Scenario, spec: &ProblemSpec) -> ProgramIr {
    if spec.network {
        assert_eq!(
            spec.members,
            (0..s.member_count()).collect::<Vec<_>>(),
            "network programs need the whole community"
        );
    }
    let mut layout = VariableLayout::new();
    for &m in &spec.members {
        push_member_columns(&mut layout, s, m);
    }
    if spec.network {
        push_network_columns(&mut layout, s);
    }
    let mut ir = ProgramIr::new(layout);
    for &m in &spec.members {
        build_member_block(&mut ir, s, m, spec.sharing);
    }
    if spec.sharing {
        build_coupling_block(&mut ir, s, &spec.members);
    }
    if spec.network {
        for t in 0..s.slots() {
            build_distflow_block(&mut ir, s, t);
        }
    }
    build_objective(&mut ir, s, spec);
    for (key, value) in &spec.pins {
        fix(&mut ir, "pin", *key, *value);
    }
    ir
}

pub fn build_selfish_program(s: &Scenario, member: usize, strategy: Strategy) -> ProgramIr {
    build_program(
        s,
        &ProblemSpec {
            members: vec![member],
            sharing: false,
            network: false,
            objective: ObjectiveSpec::Selfish {
                strategy,
                rate_adder: 0.0,
            },
            pins: BTreeMap::new(),
        },
    )
}

/// Selfish commodity problem with a linear grid fee `rate` (€/kWh) added to
/// the member's prices.
pub fn build_fixed_rate_program(s: &Scenario, member: usize, rate: f64) -> ProgramIr {
    build_program(
        s,
        &ProblemSpec {
            members: vec![member],
            sharing: false,
            network: false,
            objective: ObjectiveSpec::Selfish {
                strategy: Strategy::Co,
                rate_adder: rate,
            },
            pins: BTreeMap::new(),
        },
    )
}

pub fn build_community_program(s: &Scenario, scope: CostScope) -> ProgramIr {
    build_program(s, &community_spec(s, scope))
}

pub fn community_spec(s: &Scenario, scope: CostScope) -> ProblemSpec {
    ProblemSpec {
        members: (0..s.member_count()).collect(),
        sharing: true,
        network: scope == CostScope::Full,
        objective: ObjectiveSpec::Community(scope),
        pins: BTreeMap::new(),
    }
}

/// Commodity-only program of the sub-community `members`, sharing allowed
/// only among them.
pub fn build_coalition_program(s: &Scenario, members: &[usize]) -> ProgramIr {
    build_program(s, &coalition_spec(members))
}

pub fn coalition_spec(members: &[usize]) -> ProblemSpec {
    ProblemSpec {
        members: members.to_vec(),
        sharing: true,
        network: false,
        objective: ObjectiveSpec::Community(CostScope::CommodityOnly),
        pins: BTreeMap::new(),
    }
}

/// Network-only program for a fixed schedule: nodal loads (kW, indexed
/// `[member][slot]`) are data and losses are minimized.
pub fn build_network_evaluation(s: &Scenario, loads_kw: &[Vec<f64>]) -> ProgramIr {
    let mut layout = VariableLayout::new();
    push_network_columns(&mut layout, s);
    let mut ir = ProgramIr::new(layout);
    for t in 0..s.slots() {
        distflow_slot(&mut ir, s, t, NodeLoads::Fixed(loads_kw));
    }
    add_loss_objective(&mut ir, s);
    ir
}
