use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AllocationError;
use crate::costs::{commodity_cost, schedule_breakdown};
use crate::program::{coalition_spec, ObjectiveSpec, ProblemSpec, Strategy};
use crate::scenario::Scenario;
use crate::schedule::{MemberSchedule, Schedule};
use crate::solver::{solve_problem, SolveFailure, Solved, SolverOptions};

/// Characteristic function over all member subsets, indexed by bitmask
/// (bit `n` set when member `n` belongs to the coalition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionTable {
    pub members: usize,
    /// Savings `v(Q)` (€).
    pub value: Vec<f64>,
    /// Commodity-only optimum of each coalition (€), when the table was
    /// built from solves.
    pub optimum: Option<Vec<f64>>,
}

/// Members of the coalition encoded by `mask`, ascending.
pub fn coalition_members(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize)
        .filter(|i| mask >> i & 1 == 1)
        .collect()
}

impl CoalitionTable {
    pub fn from_values(members: usize, value: Vec<f64>) -> Result<Self, AllocationError> {
        let t = CoalitionTable {
            members,
            value,
            optimum: None,
        };
        t.check()?;
        Ok(t)
    }

    /// Table from the selfish optima and the optima of every coalition with
    /// at least two members. Empty and singleton coalitions save nothing.
    pub fn from_optima(
        selfish: &[f64],
        optima: &BTreeMap<usize, f64>,
    ) -> Result<Self, AllocationError> {
        let n = selfish.len();
        let size = 1usize << n;
        let mut optimum = vec![0.0; size];
        let mut value = vec![0.0; size];
        for mask in 1..size {
            let members = coalition_members(mask);
            if members.len() == 1 {
                optimum[mask] = selfish[members[0]];
                continue;
            }
            let Some(opt) = optima.get(&mask) else {
                return Err(AllocationError::IncompleteTable {
                    members: n,
                    expected: size,
                    found: optima.len() + n + 1,
                });
            };
            optimum[mask] = *opt;
            value[mask] = members.iter().map(|m| selfish[*m]).sum::<f64>() - opt;
        }
        Ok(CoalitionTable {
            members: n,
            value,
            optimum: Some(optimum),
        })
    }

    pub fn check(&self) -> Result<(), AllocationError> {
        let expected = 1usize << self.members;
        let found = self.value.len();
        if found != expected || self.optimum.as_ref().is_some_and(|o| o.len() != expected) {
            return Err(AllocationError::IncompleteTable {
                members: self.members,
                expected,
                found,
            });
        }
        Ok(())
    }

    /// `v` of the grand coalition.
    pub fn grand(&self) -> f64 {
        self.value[(1usize << self.members) - 1]
    }

    /// Coalitions whose savings fall below `-tol`.
    pub fn negative_values(&self, tol: f64) -> Vec<usize> {
        (0..self.value.len())
            .filter(|m| self.value[*m] < -tol)
            .collect()
    }
}

/// Commodity-only optimum of a sub-community, sharing restricted to it.
pub fn solve_coalition(
    s: &Scenario,
    mask: usize,
    opts: &SolverOptions,
    repair: bool,
) -> Result<Solved, SolveFailure> {
    let members = coalition_members(mask);
    let ids: Vec<&str> = members.iter().map(|m| s.prosumers[*m].id.as_str()).collect();
    let label = format!("coalition {{{}}}", ids.join(","));
    solve_problem(s, &coalition_spec(&members), opts, repair, &label)
}

/// Commodity cost of a solved program's schedule, without regularization.
pub fn coalition_commodity(s: &Scenario, solved: &Solved) -> f64 {
    schedule_breakdown(s, &Schedule::extract(s, &solved.ir, &solved.solution.x)).commodity
}

/// Bill of a member facing a linear grid fee `rate` (€/kWh) on top of its
/// commodity prices and scheduling selfishly against it.
pub fn fixed_rate_bill(
    s: &Scenario,
    member: usize,
    rate: f64,
    opts: &SolverOptions,
    repair: bool,
) -> Result<(f64, Solved), SolveFailure> {
    let spec = ProblemSpec {
        members: vec![member],
        sharing: false,
        network: false,
        objective: ObjectiveSpec::Selfish {
            strategy: Strategy::Co,
            rate_adder: rate,
        },
        pins: BTreeMap::new(),
    };
    let label = format!("fixed rate {rate} {}", s.prosumers[member].id);
    let solved = solve_problem(s, &spec, opts, repair, &label)?;
    let sched = MemberSchedule::extract(s, &solved.ir, &solved.solution.x, member);
    let dt = s.delta_t();
    let commodity =
        commodity_cost(&sched.load_pos, s.prices(member), dt).expect("schedule spans the horizon");
    Ok((commodity + rate * sched.billed_energy(dt), solved))
}
