//! The full study: selfish benchmarks, coalition sweep, global schedule,
//! bills, and the reports written from them.

mod emit;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::allocation::{
    coalition_commodity, coalition_members, fixed_rate_bill, nash_bills, reference_bills,
    shapley_bills, shapley_values, solve_coalition, AllocationError, BillingReport, CoalitionTable,
    MicroEuro, Scheme, SchemeBills,
};
use crate::costs::{network_costs, schedule_breakdown, CostBreakdown};
use crate::program::{build_network_evaluation, community_spec, CostScope, ObjectiveSpec, ProblemSpec, Strategy};
use crate::scenario::{load_scenario_with, validate_scenario, LoadMode, Scenario, ScenarioError, Violation};
use crate::schedule::{MemberSchedule, NetworkSchedule, Schedule};
use crate::solver::{solve, solve_problem, IterationRecord, PhysicalityReport, SolveFailure, Solved, SolverOptions, Status};

pub use emit::{emit_report, schedule_rows, write_iteration_trace, EmitError, ReportFormat, REPORT_FILES};

pub const DEFAULT_FIXED_RATES: [f64; 3] = [0.10, 0.208, 0.30];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationChoice {
    Nash,
    Shapley,
    All,
}

impl AllocationChoice {
    fn shapley(self) -> bool {
        self != AllocationChoice::Nash
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOptions {
    pub solver: SolverOptions,
    /// Apply the complementarity repair after each solve.
    pub repair: bool,
    pub allocation: AllocationChoice,
    /// Linear grid fees (€/kWh) of the fixed-rate benchmark.
    pub fixed_rates: Vec<f64>,
}

impl StudyOptions {
    /// Defaults, with solver settings taken from the scenario.
    pub fn for_scenario(s: &Scenario) -> Self {
        StudyOptions {
            solver: SolverOptions::from(&s.options),
            repair: true,
            allocation: AllocationChoice::All,
            fixed_rates: DEFAULT_FIXED_RATES.to_vec(),
        }
    }
}

/// Terminal state of one solved sub-problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubproblemRecord {
    pub name: String,
    pub status: Status,
    pub iterations: usize,
    pub objective: Option<f64>,
    pub repair_rounds: usize,
    pub pinned: usize,
    /// Interior-point iterations of the final solve; empty on failure.
    #[serde(skip)]
    pub trace: Vec<IterationRecord>,
}

impl SubproblemRecord {
    fn of(name: &str, r: &Result<Solved, SolveFailure>) -> Self {
        match r {
            Ok(sv) => SubproblemRecord {
                name: name.to_string(),
                status: sv.solution.status,
                iterations: sv.solution.iterations,
                objective: Some(sv.solution.objective),
                repair_rounds: sv.repair.rounds,
                pinned: sv.repair.pinned,
                trace: sv.solution.trace.clone(),
            },
            Err(f) => SubproblemRecord {
                name: name.to_string(),
                status: f.status,
                iterations: 0,
                objective: None,
                repair_rounds: 0,
                pinned: 0,
                trace: Vec::new(),
            },
        }
    }
}

/// Everything needed to reproduce and audit a run. Wall-clock timings are
/// kept out so that identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the canonical scenario JSON.
    pub scenario_sha256: String,
    /// SHA-256 of the canonical scenario JSON followed by the options JSON.
    pub run_sha256: String,
    pub options: StudyOptions,
    pub subproblems: Vec<SubproblemRecord>,
    /// Residuals of the global optimum, once solved.
    pub physicality: Option<PhysicalityReport>,
}

impl RunManifest {
    pub fn new(s: &Scenario, options: &StudyOptions) -> Self {
        let scenario = s.to_json();
        let opts = serde_json::to_string(options).expect("options serialize");
        let digest = |parts: &[&str]| {
            let mut h = Sha256::new();
            for p in parts {
                h.update(p.as_bytes());
            }
            hex::encode(h.finalize())
        };
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_sha256: digest(&[&scenario]),
            run_sha256: digest(&[&scenario, "\n", &opts]),
            options: options.clone(),
            subproblems: Vec::new(),
            physicality: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Load(#[from] ScenarioError),
    #[error("scenario is invalid ({} violations)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("{failure}")]
    Solve {
        failure: SolveFailure,
        manifest: Box<RunManifest>,
    },
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

/// Schedules and costs of one approach.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub costs: CostBreakdown,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub members: Vec<String>,
    /// Cooperative schedule with full costs.
    pub global: Outcome,
    /// Selfish commodity-only schedules, evaluated on the network.
    pub co_aggregate: Outcome,
    /// Selfish peak-averse schedules, evaluated on the network.
    pub par_aggregate: Outcome,
    /// Selfish commodity optimum of each member (€).
    pub selfish_commodity: Vec<f64>,
    pub coalitions: Option<CoalitionTable>,
    pub shapley: Option<Vec<f64>>,
    pub billing: BillingReport,
    pub manifest: RunManifest,
    /// Wall-clock duration of each stage.
    #[serde(skip)]
    pub timings: Vec<(&'static str, Duration)>,
}

/// Loads, validates and runs a scenario file.
pub fn run_study_file(
    path: impl AsRef<Path>,
    mode: LoadMode,
    configure: impl FnOnce(&mut StudyOptions),
) -> Result<StudyReport, StudyError> {
    let s = load_scenario_with(path, mode)?;
    let violations = validate_scenario(&s);
    if !violations.is_empty() {
        return Err(StudyError::Invalid(violations));
    }
    let mut options = StudyOptions::for_scenario(&s);
    configure(&mut options);
    run_study(&s, &options)
}

fn selfish_spec(member: usize, strategy: Strategy) -> ProblemSpec {
    ProblemSpec {
        members: vec![member],
        sharing: false,
        network: false,
        objective: ObjectiveSpec::Selfish {
            strategy,
            rate_adder: 0.0,
        },
        pins: BTreeMap::new(),
    }
}

/// Records every result, then stops at the first failure in input order.
fn settle<T>(
    manifest: &mut RunManifest,
    named: Vec<(String, Result<Solved, SolveFailure>)>,
    mut keep: impl FnMut(Solved) -> T,
) -> Result<Vec<T>, StudyError> {
    for (name, r) in &named {
        manifest.subproblems.push(SubproblemRecord::of(name, r));
    }
    let mut out = Vec::with_capacity(named.len());
    for (_, r) in named {
        match r {
            Ok(sv) => out.push(keep(sv)),
            Err(failure) => {
                return Err(StudyError::Solve {
                    failure,
                    manifest: Box::new(manifest.clone()),
                })
            }
        }
    }
    Ok(out)
}

/// Network costs of fixed member schedules: the loads are pinned and only
/// the power flow is optimized.
fn evaluate_on_network(
    s: &Scenario,
    schedule: Schedule,
    opts: &SolverOptions,
    label: &str,
) -> Result<(Outcome, Solved), SolveFailure> {
    let loads = schedule.physical_loads(s);
    let ir = build_network_evaluation(s, &loads);
    let solution = solve(&ir, opts);
    if !solution.is_optimal() {
        return Err(SolveFailure {
            problem: label.to_string(),
            status: solution.status,
            diagnosis: solution.diagnosis,
        });
    }
    let net = NetworkSchedule::extract(s, &ir, &solution.x);
    let mut costs = schedule_breakdown(s, &schedule);
    let grid = network_costs(s, &net);
    costs.total += grid.total();
    costs.network = Some(grid);
    let schedule = Schedule {
        members: schedule.members,
        network: Some(net),
    };
    let solved = Solved {
        spec: ProblemSpec {
            members: Vec::new(),
            sharing: false,
            network: true,
            objective: ObjectiveSpec::NetworkLosses,
            pins: BTreeMap::new(),
        },
        ir,
        solution,
        repair: Default::default(),
    };
    Ok((Outcome { costs, schedule }, solved))
}

fn aggregate(
    s: &Scenario,
    selfish: &[Solved],
    opts: &SolverOptions,
    label: &str,
    manifest: &mut RunManifest,
) -> Result<Outcome, StudyError> {
    let members = selfish
        .iter()
        .enumerate()
        .map(|(m, sv)| MemberSchedule::extract(s, &sv.ir, &sv.solution.x, m))
        .collect();
    let schedule = Schedule {
        members,
        network: None,
    };
    let r = evaluate_on_network(s, schedule, opts, label);
    let (outcome, solved) = match r {
        Ok((o, sv)) => (Some(o), Ok(sv)),
        Err(f) => (None, Err(f)),
    };
    settle(manifest, vec![(label.to_string(), solved)], |_| ())?;
    Ok(outcome.expect("settled without failure"))
}

fn billed_energy(s: &Scenario, schedule: &Schedule) -> Vec<f64> {
    schedule
        .members
        .iter()
        .map(|m| m.billed_energy(s.delta_t()))
        .collect()
}

/// Runs every stage of the study on a validated scenario.
pub fn run_study(s: &Scenario, options: &StudyOptions) -> Result<StudyReport, StudyError> {
    let n = s.member_count();
    let opts = &options.solver;
    let repair = options.repair;
    let mut manifest = RunManifest::new(s, options);
    let mut timings = Vec::new();
    let ids: Vec<String> = s.prosumers.iter().map(|p| p.id.clone()).collect();

    // selfish benchmarks
    let clock = Instant::now();
    let jobs: Vec<(usize, Strategy)> = [Strategy::Co, Strategy::Par]
        .into_iter()
        .flat_map(|st| (0..n).map(move |m| (m, st)))
        .collect();
    let named = jobs
        .par_iter()
        .map(|&(m, st)| {
            let name = format!("selfish {} {}", if st == Strategy::Co { "co" } else { "par" }, ids[m]);
            let r = solve_problem(s, &selfish_spec(m, st), opts, repair, &name);
            (name, r)
        })
        .collect();
    let mut selfish = settle(&mut manifest, named, |sv| sv)?;
    let par = selfish.split_off(n);
    let co = selfish;
    let selfish_commodity: Vec<f64> = co.iter().map(|sv| coalition_commodity(s, sv)).collect();
    timings.push(("selfish", clock.elapsed()));

    // coalition sweep
    let clock = Instant::now();
    let coalitions = if options.allocation.shapley() {
        let masks: Vec<usize> = (1usize..1 << n).filter(|m| m.count_ones() >= 2).collect();
        let named = masks
            .par_iter()
            .map(|&mask| {
                let names: Vec<&str> = coalition_members(mask).iter().map(|m| ids[*m].as_str()).collect();
                let name = format!("coalition {{{}}}", names.join(","));
                (name, solve_coalition(s, mask, opts, repair))
            })
            .collect();
        let optima = settle(&mut manifest, named, |sv| coalition_commodity(s, &sv))?;
        let optima: BTreeMap<usize, f64> = masks.into_iter().zip(optima).collect();
        Some(CoalitionTable::from_optima(&selfish_commodity, &optima)?)
    } else {
        None
    };
    timings.push(("coalitions", clock.elapsed()));

    // cooperative optimum
    let clock = Instant::now();
    let name = "global".to_string();
    let r = solve_problem(s, &community_spec(s, CostScope::Full), opts, repair, &name);
    let global = settle(&mut manifest, vec![(name, r)], |sv| sv)?.remove(0);
    manifest.physicality = global.solution.checks.clone();
    let schedule = Schedule::extract(s, &global.ir, &global.solution.x);
    let global = Outcome {
        costs: schedule_breakdown(s, &schedule),
        schedule,
    };
    timings.push(("global", clock.elapsed()));

    // benchmarks on the network
    let clock = Instant::now();
    let co_aggregate = aggregate(s, &co, opts, "network co", &mut manifest)?;
    let par_aggregate = aggregate(s, &par, opts, "network par", &mut manifest)?;
    timings.push(("aggregates", clock.elapsed()));

    // fixed-rate benchmark
    let clock = Instant::now();
    let jobs: Vec<(f64, usize)> = options
        .fixed_rates
        .iter()
        .flat_map(|r| (0..n).map(move |m| (*r, m)))
        .collect();
    let results: Vec<(String, Result<_, SolveFailure>)> = jobs
        .par_iter()
        .map(|&(rate, m)| {
            let name = format!("fixed rate {rate} {}", ids[m]);
            (name, fixed_rate_bill(s, m, rate, opts, repair))
        })
        .collect();
    let mut fixed = Vec::with_capacity(results.len());
    let mut named = Vec::with_capacity(results.len());
    for (name, r) in results {
        match r {
            Ok((bill, sv)) => {
                fixed.push(bill);
                named.push((name, Ok(sv)));
            }
            Err(f) => named.push((name, Err(f))),
        }
    }
    settle(&mut manifest, named, |_| ())?;
    timings.push(("fixed_rates", clock.elapsed()));

    // bills
    let clock = Instant::now();
    let total = global.costs.total;
    let mut schemes = vec![SchemeBills {
        scheme: Scheme::Nash,
        rate: None,
        bills: nash_bills(&selfish_commodity, total),
    }];
    let mut shapley = None;
    if let Some(table) = &coalitions {
        let phi = shapley_values(table)?;
        let grand = table.optimum.as_ref().expect("built from solves")[(1 << n) - 1];
        schemes.push(SchemeBills {
            scheme: Scheme::Shapley,
            rate: None,
            bills: shapley_bills(
                &selfish_commodity,
                &phi,
                grand,
                global.costs.commodity,
                global.costs.grid(),
                &billed_energy(s, &global.schedule),
            )?,
        });
        shapley = Some(phi);
    }
    for (scheme, agg) in [(Scheme::CoReference, &co_aggregate), (Scheme::ParReference, &par_aggregate)] {
        schemes.push(SchemeBills {
            scheme,
            rate: None,
            bills: reference_bills(
                &agg.costs.member_commodity,
                agg.costs.grid(),
                &billed_energy(s, &agg.schedule),
            )?,
        });
    }
    for (i, rate) in options.fixed_rates.iter().enumerate() {
        schemes.push(SchemeBills {
            scheme: Scheme::FixedRate,
            rate: Some(*rate),
            bills: fixed[i * n..(i + 1) * n]
                .iter()
                .map(|b| MicroEuro::from_euro(*b))
                .collect(),
        });
    }
    let billing = BillingReport {
        members: ids.clone(),
        cooperative_total: MicroEuro::from_euro(total),
        schemes,
    };
    timings.push(("bills", clock.elapsed()));

    Ok(StudyReport {
        members: ids,
        global,
        co_aggregate,
        par_aggregate,
        selfish_commodity,
        coalitions,
        shapley,
        billing,
        manifest,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::demo::demo_scenario;

    #[test]
    fn single_member_pays_everything() {
        let mut s = demo_scenario();
        s.prosumers.truncate(1);
        let r = run_study(&s, &StudyOptions::for_scenario(&s)).unwrap();
        let total = r.billing.cooperative_total;
        assert_eq!(r.billing.get(Scheme::Nash).unwrap().bills, vec![total]);
        assert_eq!(r.billing.get(Scheme::Shapley).unwrap().bills, vec![total]);
    }

    #[test]
    fn nash_only_skips_the_coalition_sweep() {
        let s = demo_scenario();
        let mut o = StudyOptions::for_scenario(&s);
        o.allocation = AllocationChoice::Nash;
        o.fixed_rates.clear();
        let r = run_study(&s, &o).unwrap();
        assert!(r.coalitions.is_none());
        assert!(r.billing.get(Scheme::Shapley).is_none());
        assert!(!r.manifest.subproblems.iter().any(|p| p.name.starts_with("coalition")));
    }

    #[test]
    fn manifest_hash_tracks_inputs() {
        let s = demo_scenario();
        let o = StudyOptions::for_scenario(&s);
        let a = RunManifest::new(&s, &o);
        assert_eq!(a, RunManifest::new(&s, &o));
        let mut o2 = o.clone();
        o2.repair = false;
        let b = RunManifest::new(&s, &o2);
        assert_eq!(a.scenario_sha256, b.scenario_sha256);
        assert_ne!(a.run_sha256, b.run_sha256);
        let c = RunManifest::new(&s.with_scaled_tariffs(2.0), &o);
        assert_ne!(a.scenario_sha256, c.scenario_sha256);
    }
}
