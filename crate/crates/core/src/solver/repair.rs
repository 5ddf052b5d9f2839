//! Solving assembled problems end to end, including the pass that restores
//! the complementarity conditions the convex program leaves out.
//!
//! The program allows a member to receive shared excess (`v`) while itself
//! exporting, and a member to carry both a positive and a negative net-load
//! part; either lets the community bill energy that never flowed. The
//! repair pins the offending variables to zero and re-solves, a few rounds
//! at most. Pins only remove options, so the objective can only rise.

use std::fmt;

use thiserror::Error;

use super::{solve, RowViolation, Solution, SolverOptions, Status};
use crate::program::{build_program, MemberQty, ProblemSpec, ProgramIr, VarKey, VarKind};
use crate::scenario::Scenario;

const MAX_REPAIR_ROUNDS: usize = 4;
/// Re-solves allowed for the whole repair, direct pass included.
const MAX_BRANCH_SOLVES: usize = 64;

/// A solved problem together with the program it was solved from.
#[derive(Debug, Clone)]
pub struct Solved {
    pub spec: ProblemSpec,
    pub ir: ProgramIr,
    pub solution: Solution,
    pub repair: RepairOutcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RepairOutcome {
    /// Number of re-solves performed.
    pub rounds: usize,
    /// Number of variables pinned to zero.
    pub pinned: usize,
    /// Objective before the first repair round.
    pub objective_before: Option<f64>,
}

#[derive(Debug, Clone, Error)]
pub struct SolveFailure {
    pub problem: String,
    pub status: Status,
    pub diagnosis: Vec<RowViolation>,
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: solver status {:?}", self.problem, self.status)?;
        for v in &self.diagnosis {
            write!(f, "; {} violated by {:.3e}", v.row, v.amount)?;
        }
        Ok(())
    }
}

/// Builds and solves `spec`, applying the complementarity repair when
/// `repair` is set.
pub fn solve_problem(
    s: &Scenario,
    spec: &ProblemSpec,
    opts: &SolverOptions,
    repair: bool,
    label: &str,
) -> Result<Solved, SolveFailure> {
    let ir = build_program(s, spec);
    let solution = solve(&ir, opts);
    if !solution.is_optimal() {
        return Err(SolveFailure {
            problem: label.to_string(),
            status: solution.status,
            diagnosis: solution.diagnosis,
        });
    }
    let solved = Solved {
        spec: spec.clone(),
        ir,
        solution,
        repair: RepairOutcome::default(),
    };
    if repair {
        repair_complementarity(s, solved, opts, label)
    } else {
        Ok(solved)
    }
}

/// A member and slot where the relaxation bills energy that never flowed,
/// with the two ways of ruling it out.
struct Violation {
    product: f64,
    /// Pin `l⁻` (the member imports).
    import: Vec<VarKey>,
    /// Pin `l⁺` and `v` (the member exports).
    export: Vec<VarKey>,
    /// Direction suggested by the sign of `l⁺ + v − l⁻`.
    prefers_import: bool,
}

fn violations(ir: &ProgramIr, sol: &Solution, tol: f64) -> Vec<Violation> {
    let z = &sol.x;
    let lay = &ir.layout;
    let threshold = tol / 4.0;
    let mut out = Vec::new();
    for key in lay.keys() {
        let VarKind::Member {
            member,
            qty: MemberQty::LoadNeg,
        } = key.kind
        else {
            continue;
        };
        let t = key.slot;
        let pos_key = VarKey::member(member, MemberQty::LoadPos, t);
        let v_key = VarKey::member(member, MemberQty::Excess, t);
        let neg = z[lay.at(*key)].max(0.0);
        let pos = z[lay.at(pos_key)].max(0.0);
        let v = z[lay.at(v_key)].max(0.0);
        let product = (v * neg).max(pos * neg);
        if product <= threshold {
            continue;
        }
        out.push(Violation {
            product,
            import: vec![*key],
            export: vec![pos_key, v_key],
            prefers_import: pos + v - neg > 0.0,
        });
    }
    out
}

/// New zero pins that resolve the complementarity violations of `sol`.
///
/// Each offending member and slot is assigned a direction from the sign of
/// its virtual load before sharing, `l⁺ + v − l⁻`: an importer loses `l⁻`,
/// an exporter loses `l⁺` and `v`. The current point, adjusted accordingly,
/// stays feasible, so the pinned program is never infeasible.
fn violation_pins(ir: &ProgramIr, sol: &Solution, tol: f64) -> Vec<VarKey> {
    violations(ir, sol, tol)
        .into_iter()
        .flat_map(|v| if v.prefers_import { v.import } else { v.export })
        .collect()
}

fn needs_repair(sol: &Solution) -> bool {
    sol.checks.as_ref().is_some_and(|c| c.repair_needed)
}

fn with_pins(spec: &ProblemSpec, pins: &[VarKey]) -> ProblemSpec {
    let mut spec = spec.clone();
    for key in pins {
        spec.pins.entry(*key).or_insert(0.0);
    }
    spec
}

/// Splits on the worst offender; the suggested direction is explored first.
fn branch(stack: &mut Vec<ProblemSpec>, spec: &ProblemSpec, vs: Vec<Violation>) {
    let Some(v) = vs.into_iter().max_by(|a, b| a.product.total_cmp(&b.product)) else {
        return;
    };
    let (first, second) = if v.prefers_import {
        (v.import, v.export)
    } else {
        (v.export, v.import)
    };
    stack.push(with_pins(spec, &second));
    stack.push(with_pins(spec, &first));
}

/// Re-solves with offending variables pinned to zero until the
/// complementarity residuals are within tolerance.
///
/// The first pass pins every offender at once in its suggested direction.
/// That is cheap and always feasible but may exclude the best physical
/// schedule, so a bounded branch and bound over single offenders follows:
/// each pinned optimum bounds every schedule below it, and subtrees that
/// cannot beat the incumbent are cut.
pub fn repair_complementarity(
    s: &Scenario,
    solved: Solved,
    opts: &SolverOptions,
    label: &str,
) -> Result<Solved, SolveFailure> {
    if !needs_repair(&solved.solution) {
        return Ok(solved);
    }
    let tol = opts.complementarity_tol;
    let root_spec = solved.spec.clone();
    let root_objective = solved.solution.objective;
    let root_pins = solved.spec.pins.len();
    let root = violations(&solved.ir, &solved.solution, tol);
    let mut solves = 0;

    let mut incumbent = solved;
    for round in 1..=MAX_REPAIR_ROUNDS {
        let pins = violation_pins(&incumbent.ir, &incumbent.solution, tol);
        let spec = with_pins(&incumbent.spec, &pins);
        if spec.pins.len() == incumbent.spec.pins.len() {
            break;
        }
        let ir = build_program(s, &spec);
        let solution = solve(&ir, opts);
        solves += 1;
        if !solution.is_optimal() {
            return Err(SolveFailure {
                problem: format!("{label} (repair round {round})"),
                status: solution.status,
                diagnosis: solution.diagnosis,
            });
        }
        let done = !needs_repair(&solution);
        incumbent = Solved {
            spec,
            ir,
            solution,
            repair: RepairOutcome::default(),
        };
        if done {
            break;
        }
    }

    let mut best = (!needs_repair(&incumbent.solution)).then_some(incumbent.solution.objective);
    let cut = |objective: f64, best: Option<f64>| {
        best.is_some_and(|b| objective >= b - opts.gap_tol * b.abs().max(1.0))
    };
    let mut stack = Vec::new();
    branch(&mut stack, &root_spec, root);
    while let Some(spec) = stack.pop() {
        if solves >= MAX_BRANCH_SOLVES {
            break;
        }
        let ir = build_program(s, &spec);
        let solution = solve(&ir, opts);
        solves += 1;
        if !solution.is_optimal() || cut(solution.objective, best) {
            continue;
        }
        if needs_repair(&solution) {
            branch(&mut stack, &spec, violations(&ir, &solution, tol));
            continue;
        }
        best = Some(solution.objective);
        incumbent = Solved {
            spec,
            ir,
            solution,
            repair: RepairOutcome::default(),
        };
    }

    incumbent.repair = RepairOutcome {
        rounds: solves,
        pinned: incumbent.spec.pins.len() - root_pins,
        objective_before: Some(root_objective),
    };
    Ok(incumbent)
}
