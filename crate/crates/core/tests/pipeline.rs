mod common;

use std::collections::BTreeSet;
use std::fs;

use serde_json::json;

use common::{close, single_member};
use gridshare::allocation::{coalition_commodity, solve_coalition, BillingReport, MicroEuro, Scheme};
use gridshare::pipeline::{
    emit_report, run_study, AllocationChoice, ReportFormat, StudyError, StudyOptions, REPORT_FILES,
};
use gridshare::program::{community_spec, CostScope};
use gridshare::scenario::demo::demo_scenario;
use gridshare::solver::{solve_problem, Status};

fn demo_report() -> (gridshare::scenario::Scenario, gridshare::pipeline::StudyReport) {
    let s = demo_scenario();
    let r = run_study(&s, &StudyOptions::for_scenario(&s)).unwrap();
    (s, r)
}

#[test]
fn every_sub_problem_is_listed_once() {
    let (_, r) = demo_report();
    let names: Vec<&str> = r.manifest.subproblems.iter().map(|p| p.name.as_str()).collect();
    let unique: BTreeSet<&str> = names.iter().copied().collect();
    assert_eq!(unique.len(), names.len());
    // 2 strategies x 3 members, 4 multi-member coalitions, global, 2 evaluations, 3 rates x 3 members
    assert_eq!(names.len(), 6 + 4 + 1 + 2 + 9);
    assert!(r.manifest.subproblems.iter().all(|p| p.status == Status::Optimal));
    assert!(names.contains(&"global"));
    assert!(names.contains(&"coalition {node1,node2,node3}"));
}

#[test]
fn totals_cross_foot() {
    let (_, r) = demo_report();
    for o in [&r.global, &r.co_aggregate, &r.par_aggregate] {
        let c = &o.costs;
        assert!(close(c.total, c.commodity + c.grid(), 1e-12));
        assert!(close(c.commodity, c.member_commodity.iter().sum(), 1e-12));
    }
    let cooperative = MicroEuro::from_euro(r.global.costs.total);
    assert_eq!(r.billing.cooperative_total, cooperative);
    for scheme in [Scheme::Nash, Scheme::Shapley] {
        assert_eq!(r.billing.get(scheme).unwrap().total(), cooperative);
    }
    let co = r.billing.get(Scheme::CoReference).unwrap().total();
    assert!((co.0 - MicroEuro::from_euro(r.co_aggregate.costs.total).0).abs() <= 1);
}

#[test]
fn grand_coalition_matches_a_direct_solve() {
    let (s, r) = demo_report();
    let table = r.coalitions.as_ref().unwrap();
    let full = (1 << s.member_count()) - 1;
    let opts = r.manifest.options.solver;
    let direct = solve_problem(&s, &community_spec(&s, CostScope::CommodityOnly), &opts, true, "direct").unwrap();
    let direct = coalition_commodity(&s, &direct);
    let expected = r.selfish_commodity.iter().sum::<f64>() - direct;
    assert!(close(table.value[full], expected, 1e-6), "{} vs {expected}", table.value[full]);
    assert_eq!(table.value[0], 0.0);
    for m in 0..s.member_count() {
        assert_eq!(table.value[1 << m], 0.0);
    }
}

#[test]
fn coalition_values_do_not_depend_on_solve_order() {
    let (s, r) = demo_report();
    let optima = r.coalitions.as_ref().unwrap().optimum.as_ref().unwrap();
    let opts = r.manifest.options.solver;
    for mask in (1..optima.len()).rev().filter(|m| m.count_ones() >= 2) {
        let sv = solve_coalition(&s, mask, &opts, true).unwrap();
        assert_eq!(coalition_commodity(&s, &sv), optima[mask], "coalition {mask:b}");
    }
}

#[test]
fn nash_only_run_omits_shapley_outputs() {
    let s = demo_scenario();
    let mut o = StudyOptions::for_scenario(&s);
    o.allocation = AllocationChoice::Nash;
    let r = run_study(&s, &o).unwrap();
    assert!(r.coalitions.is_none() && r.shapley.is_none());
    assert!(r.billing.get(Scheme::Shapley).is_none());
    assert!(!r.manifest.subproblems.iter().any(|p| p.name.starts_with("coalition")));
}

#[test]
fn solver_failure_names_the_sub_problem() {
    let mut s = demo_scenario();
    s.options.max_iter = 2;
    match run_study(&s, &StudyOptions::for_scenario(&s)) {
        Err(StudyError::Solve { failure, manifest }) => {
            let last = manifest.subproblems.last().unwrap();
            assert_ne!(last.status, Status::Optimal);
            assert!(manifest.subproblems.iter().any(|p| p.name == failure.problem));
            assert!(failure.to_string().contains(&failure.problem));
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("two iterations should not be enough"),
    }
}

#[test]
fn reports_round_trip() {
    let (s, r) = demo_report();
    let dir = tempfile::tempdir().unwrap();
    for (format, files) in REPORT_FILES {
        let out = dir.path().join(format!("{format:?}"));
        fs::create_dir(&out).unwrap();
        emit_report(&s, &r, &out, format).unwrap();
        for f in files {
            assert!(out.join(f).is_file(), "{f} missing");
        }
        let bills = match format {
            ReportFormat::Csv => BillingReport::read_csv(fs::File::open(out.join("bills.csv")).unwrap()).unwrap(),
            ReportFormat::Json => BillingReport::from_json(&fs::read_to_string(out.join("bills.json")).unwrap()).unwrap(),
        };
        assert_eq!(bills, r.billing);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("Csv/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subproblems"].as_array().unwrap().len(), r.manifest.subproblems.len());
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn schedules_cover_every_approach() {
    let (s, r) = demo_report();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&s, &r, dir.path(), ReportFormat::Csv).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("schedules.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["approach", "entity", "quantity", "slot", "value"]
    );
    let approaches: BTreeSet<String> = reader.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(
        approaches,
        ["co_aggregate", "global", "par_aggregate"].map(String::from).into_iter().collect()
    );
}

#[test]
fn empty_single_member_run_costs_nothing() {
    let s = single_member(json!({"base_load_kw": [0.0]}), &[0.2], 1.0, json!({"gamma_up": 0.001}));
    let r = run_study(&s, &StudyOptions::for_scenario(&s)).unwrap();
    assert!(r.global.costs.total.abs() < 1e-9);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&s, &r, dir.path(), ReportFormat::Csv).unwrap();
    let coalitions = fs::read_to_string(dir.path().join("coalitions.csv")).unwrap();
    assert_eq!(coalitions, "mask,members,commodity_optimum_eur,value_eur\n1,a,0.0,0.0\n");
    let nash = &r.billing.get(Scheme::Nash).unwrap().bills;
    let shapley = &r.billing.get(Scheme::Shapley).unwrap().bills;
    assert_eq!(nash, &vec![MicroEuro::ZERO]);
    assert_eq!(nash, shapley);
}
