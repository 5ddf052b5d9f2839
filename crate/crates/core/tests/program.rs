mod common;

use serde_json::json;

use common::{close, scenario, single_member};
use gridshare::costs::{breakdown, regularization};
use gridshare::oracle::radial_power_flow;
use gridshare::program::{
    build_community_program, build_network_evaluation, build_selfish_program, community_spec, BranchQty,
    CostScope, ProgramIr, Strategy, VarKey,
};
use gridshare::scenario::demo::demo_scenario;
use gridshare::scenario::Scenario;
use gridshare::schedule::Schedule;
use gridshare::solver::{solve, solve_problem, verify_physicality, Solution, SolverOptions};

fn solved(s: &Scenario, ir: &ProgramIr) -> Solution {
    let sol = solve(ir, &SolverOptions::from(&s.options));
    assert!(sol.is_optimal(), "{:?}", sol.status);
    sol
}

fn value(ir: &ProgramIr, sol: &Solution, key: VarKey) -> f64 {
    sol.x[ir.layout.at(key)]
}

fn appliance(ir: &ProgramIr, sol: &Solution, slots: usize) -> Vec<f64> {
    (0..slots).map(|t| value(ir, sol, VarKey::appliance(0, 0, t))).collect()
}

#[test]
fn two_node_line_matches_exact_power_flow() {
    // R = 0.1 p.u. on a 400 V / 100 kVA base (1.6 ohm), 1 p.u. load at unit power factor
    let s = scenario(json!({
        "schema_version": 1,
        "horizon": {"slots": 1, "delta_t_h": 1.0},
        "prosumers": [{"id": "a", "node": 1, "supplier": "s", "base_load_kw": [100.0]}],
        "network": {
            "node_count": 2, "voltage_base_v": 400, "power_base_kva": 100,
            "branches": [{"from": 0, "to": 1, "r_ohm": 0.16, "x_ohm": 0.0, "length_km": 1.0}]
        },
        "tariffs": {"suppliers": {"s": [0.1]}, "gamma_up": 0.0, "gamma_loss": 0.1, "gamma_flow": 0.0}
    }));
    // phi = (1 + 0.1 phi)^2 on the smaller root
    let phi = (0.8 - 0.6f64.sqrt()) / 0.02;
    let p = 1.0 + 0.1 * phi;
    assert!(close(phi, 1.270_166_5, 1e-7));

    let exact = radial_power_flow(&s.network, &[(0.0, 0.0), (1.0, 0.0)]).unwrap();
    assert!(close(exact.current_sq[0], phi, 1e-9));
    assert!(close(exact.p_from(&s.network, 0), p, 1e-9));
    assert!(close(exact.voltage_sq[1], 1.0 - 2.0 * 0.1 * p + 0.01 * phi, 1e-9));

    let ir = build_network_evaluation(&s, &[vec![100.0]]);
    let sol = solved(&s, &ir);
    assert!(close(value(&ir, &sol, VarKey::branch(0, BranchQty::CurrentSq, 0)), phi, 1e-6));
    assert!(close(value(&ir, &sol, VarKey::branch(0, BranchQty::PFrom, 0)), p, 1e-6));
    assert!(close(value(&ir, &sol, VarKey::branch(0, BranchQty::PTo, 0)), -1.0, 1e-6));
    assert!(close(value(&ir, &sol, VarKey::voltage(0, 0)), 1.0, 1e-9));
}

#[test]
fn lossless_branch_keeps_voltage_and_flow() {
    let s = single_member(json!({"base_load_kw": [30.0]}), &[0.1], 1.0, json!({"gamma_up": 0.001}));
    let ir = build_community_program(&s, CostScope::Full);
    let sol = solved(&s, &ir);
    let from = value(&ir, &sol, VarKey::branch(0, BranchQty::PFrom, 0));
    let to = value(&ir, &sol, VarKey::branch(0, BranchQty::PTo, 0));
    assert!(close(from, 0.3, 1e-6));
    assert!((from + to).abs() < 1e-7);
    assert!((value(&ir, &sol, VarKey::voltage(1, 0)) - 1.0).abs() < 1e-7);
}

#[test]
fn zero_injections_leave_the_network_idle() {
    let mut s = single_member(json!({"base_load_kw": [0.0, 0.0]}), &[0.1, 0.2], 1.0, json!({"gamma_loss": 0.2}));
    s.network.branches[0].r_ohm = 0.1;
    let ir = build_community_program(&s, CostScope::Full);
    let sol = solved(&s, &ir);
    for t in 0..2 {
        assert!(value(&ir, &sol, VarKey::branch(0, BranchQty::CurrentSq, t)).abs() < 1e-7);
        assert!(value(&ir, &sol, VarKey::branch(0, BranchQty::PFrom, t)).abs() < 1e-7);
        assert!((value(&ir, &sol, VarKey::voltage(1, t)) - 1.0).abs() < 1e-7);
    }
    assert!(sol.objective.abs() < 1e-7);
}

#[test]
fn single_permitted_slot_forces_the_schedule() {
    let s = single_member(
        json!({"base_load_kw": [0.0, 0.0],
               "appliances": [{"id": "w", "energy_kwh": 2.0, "max_power_kw": 3.0, "permitted": [true, false]}]}),
        &[0.3, 0.1],
        1.0,
        json!({}),
    );
    let ir = build_community_program(&s, CostScope::CommodityOnly);
    let sol = solved(&s, &ir);
    let x = appliance(&ir, &sol, 2);
    assert!(close(x[0], 2.0, 1e-7) && x[1].abs() < 1e-7, "{x:?}");
}

#[test]
fn commodity_objective_bills_positive_load() {
    let s = single_member(json!({"base_load_kw": [1.0, 2.0]}), &[0.1, 0.2], 1.0, json!({}));
    let ir = build_community_program(&s, CostScope::CommodityOnly);
    assert!(ir.cones.is_empty());
    let sol = solved(&s, &ir);
    assert!(close(sol.objective, 0.5, 1e-7), "{}", sol.objective);
}

#[test]
fn upstream_fee_is_quadratic_in_exchanged_energy() {
    let s = single_member(json!({"base_load_kw": [3.0]}), &[0.0], 0.5, json!({"gamma_up": 0.02}));
    let ir = build_community_program(&s, CostScope::Full);
    let sol = solved(&s, &ir);
    assert!(close(sol.objective, 0.045, 1e-7), "{}", sol.objective);
}

#[test]
fn selfish_commodity_strategy_buys_in_the_cheap_slot() {
    let s = single_member(
        json!({"base_load_kw": [0.0, 0.0],
               "appliances": [{"id": "w", "energy_kwh": 2.0, "max_power_kw": 3.0, "permitted": [true, true]}]}),
        &[0.1, 0.3],
        1.0,
        json!({"gamma_up": 0.01}),
    );
    let ir = build_selfish_program(&s, 0, Strategy::Co);
    let x = appliance(&ir, &solved(&s, &ir), 2);
    assert!(close(x[0], 2.0, 1e-6) && x[1].abs() < 1e-6, "{x:?}");
}

#[test]
fn peak_averse_strategy_spreads_under_flat_prices() {
    let s = single_member(
        json!({"base_load_kw": [0.0, 0.0, 0.0],
               "appliances": [{"id": "w", "energy_kwh": 3.0, "max_power_kw": 3.0, "permitted": [true, true, true]}]}),
        &[0.2, 0.2, 0.2],
        1.0,
        json!({"gamma_up": 0.01}),
    );
    let ir = build_selfish_program(&s, 0, Strategy::Par);
    let x = appliance(&ir, &solved(&s, &ir), 3);
    assert!(x.iter().all(|v| close(*v, 1.0, 1e-5)), "{x:?}");
}

#[test]
fn strategies_coincide_without_upstream_fee() {
    let s = single_member(
        json!({"base_load_kw": [1.0, 0.5, 2.0],
               "appliances": [{"id": "w", "energy_kwh": 4.0, "max_power_kw": 2.0, "permitted": [true, true, true]}]}),
        &[0.3, 0.1, 0.2],
        1.0,
        json!({}),
    );
    let co = build_selfish_program(&s, 0, Strategy::Co);
    let par = build_selfish_program(&s, 0, Strategy::Par);
    let (x_co, x_par) = (appliance(&co, &solved(&s, &co), 3), appliance(&par, &solved(&s, &par), 3));
    for (a, b) in x_co.iter().zip(&x_par) {
        assert!((a - b).abs() < 1e-5, "{x_co:?} vs {x_par:?}");
    }
}

#[test]
fn demo_breakdown_matches_objective() {
    let s = demo_scenario();
    let ir = build_community_program(&s, CostScope::Full);
    let sol = solved(&s, &ir);
    let costs = breakdown(&sol, &ir, &s).unwrap();
    let schedule = Schedule::extract(&s, &ir, &sol.x);
    let expected = sol.objective - regularization(&s, &schedule);
    assert!(close(costs.total, expected, 1e-6), "{} vs {expected}", costs.total);
    let n = costs.network.unwrap();
    assert!(close(costs.total, costs.commodity + n.upstream + n.local_loss + n.local_flow, 1e-9));
    assert!(costs.member_commodity.iter().all(|c| *c >= 0.0));
    assert!(n.upstream >= 0.0 && n.local_loss >= -1e-9 && n.local_flow >= 0.0);
}

#[test]
fn demo_optimum_is_physical() {
    let s = demo_scenario();
    let opts = SolverOptions::from(&s.options);
    let sv = solve_problem(&s, &community_spec(&s, CostScope::Full), &opts, true, "global").unwrap();
    let report = verify_physicality(&sv.solution, &sv.ir, opts.complementarity_tol);
    assert!(report.cone_residual <= 1e-6, "{report:?}");
    assert!(report.load_complementarity <= 1e-6, "{report:?}");
    assert!(report.sharing_complementarity <= 1e-6, "{report:?}");
    assert!(!report.repair_needed);
}

#[test]
fn repair_only_raises_the_objective() {
    let opts = SolverOptions::default();
    let mut repaired = 0;
    for seed in 0..12 {
        let s = gridshare::scenario::synth::random_scenario(seed, 3, 4);
        for scope in [CostScope::Full, CostScope::CommodityOnly] {
            let spec = community_spec(&s, scope);
            let raw = solve_problem(&s, &spec, &opts, false, "raw").unwrap();
            let sv = solve_problem(&s, &spec, &opts, true, "repaired").unwrap();
            let checks = sv.solution.checks.as_ref().unwrap();
            assert!(!checks.repair_needed, "seed {seed}: {checks:?}");
            if sv.repair.rounds == 0 {
                assert_eq!(sv.solution.x, raw.solution.x);
                continue;
            }
            repaired += 1;
            let before = sv.repair.objective_before.unwrap();
            assert_eq!(before, raw.solution.objective);
            assert!(sv.solution.objective >= before - 1e-7 * before.abs().max(1.0));
        }
    }
    assert!(repaired > 0, "no instance needed a repair");
}
