//! Brute-force verifiers: exhaustive schedule search on discretized tiny
//! instances with an exact power flow, and Shapley values by enumeration of
//! player orderings.

mod flow;

use rayon::prelude::*;
use thiserror::Error;

use crate::allocation::CoalitionTable;
use crate::costs::{commodity_cost, upstream_cost};
use crate::scenario::{Scenario, TerminalPolicy};

pub use flow::{radial_power_flow, FlowState};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for the oracle: {what} is {value}, limit {limit}")]
    CapsExceeded {
        what: &'static str,
        value: u64,
        limit: u64,
    },
    #[error("no grid point satisfies the constraints")]
    NoFeasiblePoint,
    #[error("coalition table for {members} members needs {expected} entries, found {found}")]
    IncompleteTable {
        members: usize,
        expected: usize,
        found: usize,
    },
}

/// Discretization and size caps of the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSearchSpec {
    /// Grid points per decision dimension (at least 2).
    pub steps: usize,
    pub max_members: usize,
    pub max_slots: usize,
    pub max_appliances: usize,
    pub max_dimensions: usize,
    pub max_points: u64,
}

impl GridSearchSpec {
    pub fn new(steps: usize) -> Self {
        GridSearchSpec {
            steps: steps.max(2),
            max_members: 2,
            max_slots: 2,
            max_appliances: 2,
            max_dimensions: 6,
            max_points: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Lowest full-scope cost over feasible grid points (€).
    pub cost: f64,
    pub dimensions: usize,
    pub points: u64,
    pub feasible: u64,
}

#[derive(Debug, Clone, Copy)]
enum Dim {
    /// Power of an appliance in one of its permitted slots, except the last.
    Appliance,
    /// Physical battery power in a slot.
    Battery,
    /// Power the battery owner hosts for the other member in a slot.
    Hosted,
}

/// Each decision is a fraction `u ∈ [0, 1]` of the interval left feasible by
/// the decisions before it, so every grid point respects the energy and
/// power limits by construction.
struct Problem<'a> {
    s: &'a Scenario,
    dims: Vec<Dim>,
    battery_owner: Option<usize>,
    hosting: bool,
    free_battery_slots: usize,
}

fn check_cap(what: &'static str, value: usize, limit: usize) -> Result<(), OracleError> {
    if value > limit {
        return Err(OracleError::CapsExceeded {
            what,
            value: value as u64,
            limit: limit as u64,
        });
    }
    Ok(())
}

const TOL: f64 = 1e-9;

/// Point at fraction `u` of `[lo, hi]`, or `None` when the interval is empty.
fn pick(lo: f64, hi: f64, u: f64) -> Option<f64> {
    if lo > hi + TOL {
        return None;
    }
    Some(lo + u * (hi - lo).max(0.0))
}

impl<'a> Problem<'a> {
    fn new(s: &'a Scenario, spec: &GridSearchSpec) -> Result<Self, OracleError> {
        let n = s.member_count();
        let slots = s.slots();
        check_cap("member count", n, spec.max_members)?;
        check_cap("slot count", slots, spec.max_slots)?;
        let apps: usize = s.prosumers.iter().map(|p| p.appliances.len()).sum();
        check_cap("appliance count", apps, spec.max_appliances)?;
        let owners: Vec<usize> = (0..n).filter(|m| s.prosumers[*m].battery.is_some()).collect();
        check_cap("battery count", owners.len(), 1)?;

        let mut dims = Vec::new();
        for p in &s.prosumers {
            for app in &p.appliances {
                for _ in 1..app.permitted_slots() {
                    dims.push(Dim::Appliance);
                }
            }
        }
        let battery_owner = owners.first().copied();
        let hosting = battery_owner.is_some() && n >= 2;
        let mut free_battery_slots = 0;
        if let Some(b) = battery_owner.map(|m| s.prosumers[m].battery.as_ref().expect("owner")) {
            free_battery_slots = match b.terminal {
                TerminalPolicy::ReturnToInitial => slots.saturating_sub(1),
                TerminalPolicy::Free => slots,
            };
            for _ in 0..free_battery_slots {
                dims.push(Dim::Battery);
                if hosting {
                    dims.push(Dim::Hosted);
                }
            }
        }
        check_cap("decision dimensions", dims.len(), spec.max_dimensions)?;
        Ok(Problem {
            s,
            dims,
            battery_owner,
            hosting,
            free_battery_slots,
        })
    }

    /// Appliance powers per member and slot.
    fn appliances(&self, u: &[f64]) -> Option<Vec<Vec<f64>>> {
        let s = self.s;
        let dt = s.delta_t();
        let mut flexible = vec![vec![0.0; s.slots()]; s.member_count()];
        let mut next = 0;
        for (m, p) in s.prosumers.iter().enumerate() {
            for app in &p.appliances {
                let permitted: Vec<usize> = (0..s.slots()).filter(|t| app.permitted[*t]).collect();
                let mut rest = app.energy_kwh / dt;
                for (j, &t) in permitted.iter().enumerate() {
                    let after = (permitted.len() - j - 1) as f64;
                    let x = if after == 0.0 {
                        // the last permitted slot completes the energy
                        if rest > app.max_power_kw + TOL {
                            return None;
                        }
                        rest
                    } else {
                        let lo = (rest - app.max_power_kw * after).max(0.0);
                        let x = pick(lo, app.max_power_kw.min(rest), u[next])?;
                        next += 1;
                        x
                    };
                    flexible[m][t] += x;
                    rest -= x;
                }
                if permitted.is_empty() && rest.abs() > TOL {
                    return None;
                }
            }
        }
        Some(flexible)
    }

    /// Physical battery power and hosted power per slot.
    fn battery(&self, u: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let s = self.s;
        let slots = s.slots();
        let dt = s.delta_t();
        let mut charge = vec![0.0; slots];
        let mut hosted = vec![0.0; slots];
        let Some(owner) = self.battery_owner else {
            return Some((charge, hosted));
        };
        let b = s.prosumers[owner].battery.as_ref().expect("owner");
        let first = self
            .dims
            .iter()
            .position(|d| !matches!(d, Dim::Appliance))
            .unwrap_or(u.len());
        let mut u = u[first..].iter();
        let mut own = b.initial_energy_kwh;
        let mut host = 0.0;
        for t in 0..slots {
            let stored = own + host;
            if t < self.free_battery_slots {
                let mut lo = (-b.max_discharge_kw).max(-stored / dt);
                let mut hi = b.max_charge_kw.min((b.capacity_kwh - stored) / dt);
                if self.free_battery_slots < slots {
                    // the initial energy must stay reachable at the end
                    let after = (slots - 1 - t) as f64;
                    lo = lo.max((b.initial_energy_kwh - b.max_charge_kw * dt * after - stored) / dt);
                    hi = hi.min((b.initial_energy_kwh + b.max_discharge_kw * dt * after - stored) / dt);
                }
                charge[t] = pick(lo, hi, *u.next().expect("battery dimension"))?;
                if self.hosting {
                    hosted[t] = pick(-host / dt, own / dt + charge[t], *u.next().expect("hosted dimension"))?;
                }
            } else {
                charge[t] = (b.initial_energy_kwh - stored) / dt;
                hosted[t] = -host / dt;
                if charge[t] > b.max_charge_kw + TOL || charge[t] < -b.max_discharge_kw - TOL {
                    return None;
                }
            }
            own += dt * (charge[t] - hosted[t]);
            host += dt * hosted[t];
        }
        Some((charge, hosted))
    }

    /// Full-scope cost of the schedule at one grid point, or `None` when the
    /// point violates a constraint.
    fn evaluate(&self, u: &[f64]) -> Option<f64> {
        let s = self.s;
        let n = s.member_count();
        let slots = s.slots();
        let dt = s.delta_t();
        let flexible = self.appliances(u)?;
        let (charge, hosted) = self.battery(u)?;

        let base = s.network.power_base_kva;
        let at_node = s.member_at_node();
        let other = |owner: usize| (0..n).find(|m| *m != owner);
        let mut cost = 0.0;
        let mut interface = Vec::with_capacity(slots);
        for t in 0..slots {
            // physical and billed loads
            let mut physical = vec![0.0; n];
            let mut billed = vec![0.0; n];
            for m in 0..n {
                let own = s.prosumers[m].base_load_kw[t] + flexible[m][t];
                physical[m] = own;
                billed[m] = own;
            }
            if let Some(owner) = self.battery_owner {
                physical[owner] += charge[t];
                billed[owner] += charge[t] - hosted[t];
                if let Some(o) = other(owner).filter(|_| self.hosting) {
                    billed[o] += hosted[t];
                }
            }
            // exports are shared with the most expensive importers first
            let mut pool: f64 = billed.iter().map(|u| (-u).max(0.0)).sum();
            let mut importers: Vec<usize> = (0..n).filter(|m| billed[*m] > 0.0).collect();
            importers.sort_by(|a, b| s.prices(*b)[t].total_cmp(&s.prices(*a)[t]).then(a.cmp(b)));
            for m in importers {
                let v = billed[m].min(pool);
                pool -= v;
                let pos = billed[m] - v;
                cost += commodity_cost(&[pos], &s.prices(m)[t..=t], dt).expect("one slot");
            }
            for u in &billed {
                cost += s.epsilon() * (-u).max(0.0);
            }

            let mut loads = vec![(0.0, 0.0); s.network.node_count];
            for (node, m) in at_node.iter().enumerate() {
                if let Some(m) = m {
                    loads[node] = (
                        physical[*m] / base,
                        s.prosumers[*m].reactive_load_kvar()[t] / base,
                    );
                }
            }
            let st = radial_power_flow(&s.network, &loads)?;
            if let Some([lo, hi]) = s.network.voltage_bounds_pu2 {
                if st.voltage_sq[1..].iter().any(|v| *v < lo - TOL || *v > hi + TOL) {
                    return None;
                }
            }
            interface.push(st.interface(&s.network) * base);
            let tar = &s.tariffs;
            for (b, br) in s.network.branches.iter().enumerate() {
                let (r, _) = s.network.branch_pu(b);
                cost += dt * tar.gamma_loss * r * st.current_sq[b] * base;
                cost += dt * tar.gamma_flow * br.length_km * st.p_from(&s.network, b).abs() * base;
            }
        }
        cost += upstream_cost(&interface, s.tariffs.gamma_up, dt);
        Some(cost)
    }
}

/// Lowest full-scope community cost over a uniform grid of the decisions of
/// a tiny instance, each point evaluated with the exact power flow.
///
/// With `k` steps the grid has `k^d` points for `d` decisions.
pub fn brute_force_schedule(s: &Scenario, spec: &GridSearchSpec) -> Result<OracleResult, OracleError> {
    let problem = Problem::new(s, spec)?;
    let dims = problem.dims.len();
    let k = spec.steps.max(2) as u64;
    let points = k
        .checked_pow(dims as u32)
        .filter(|p| *p <= spec.max_points)
        .ok_or(OracleError::CapsExceeded {
            what: "grid points",
            value: k.saturating_pow(dims as u32),
            limit: spec.max_points,
        })?;
    let step = 1.0 / (k - 1) as f64;
    let (best, feasible) = (0..points)
        .into_par_iter()
        .map(|mut idx| {
            let mut values = Vec::with_capacity(dims);
            for _ in 0..dims {
                values.push((idx % k) as f64 * step);
                idx /= k;
            }
            problem.evaluate(&values)
        })
        .map(|c| (c, u64::from(c.is_some())))
        .reduce(
            || (None, 0),
            |(a, fa), (b, fb)| {
                let best = match (a, b) {
                    (Some(x), Some(y)) => Some(f64::min(x, y)),
                    (x, None) => x,
                    (None, y) => y,
                };
                (best, fa + fb)
            },
        );
    Ok(OracleResult {
        cost: best.ok_or(OracleError::NoFeasiblePoint)?,
        dimensions: dims,
        points,
        feasible,
    })
}

/// Shapley values as the average marginal contribution over all orderings
/// of the players.
pub fn shapley_by_permutations(table: &CoalitionTable) -> Result<Vec<f64>, OracleError> {
    let n = table.members;
    check_cap("player count", n, 8)?;
    let expected = 1usize << n;
    if table.value.len() != expected {
        return Err(OracleError::IncompleteTable {
            members: n,
            expected,
            found: table.value.len(),
        });
    }
    let mut sum = vec![0.0; n];
    let mut count = 0u64;
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        let mut mask = 0usize;
        for &i in &order {
            let next = mask | 1 << i;
            sum[i] += table.value[next] - table.value[mask];
            mask = next;
        }
        count += 1;
        if !next_permutation(&mut order) {
            break;
        }
    }
    Ok(sum.into_iter().map(|x| x / count as f64).collect())
}

/// Advances to the next lexicographic permutation; false after the last.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).expect("exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::synth::random_tiny_scenario;

    #[test]
    fn permutations_cover_all_orders() {
        let mut v = vec![0, 1, 2, 3];
        let mut n = 1;
        while next_permutation(&mut v) {
            n += 1;
        }
        assert_eq!(n, 24);
        assert_eq!(v, vec![3, 2, 1, 0]);
    }

    #[test]
    fn permutation_shapley_examples() {
        let t = CoalitionTable::from_values(2, vec![0.0, 0.0, 0.0, 10.0]).unwrap();
        assert_eq!(shapley_by_permutations(&t).unwrap(), vec![5.0, 5.0]);
        let t = CoalitionTable::from_values(3, vec![0.0, 1.0, 2.0, 4.0, 3.0, 5.0, 6.0, 9.0])
            .unwrap();
        let phi = shapley_by_permutations(&t).unwrap();
        for (p, e) in phi.iter().zip([2.0, 3.0, 4.0]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn caps_are_enforced() {
        let s = crate::scenario::demo::demo_scenario();
        assert!(matches!(
            brute_force_schedule(&s, &GridSearchSpec::new(3)),
            Err(OracleError::CapsExceeded { .. })
        ));
        let t = CoalitionTable::from_values(9, vec![0.0; 512]).unwrap();
        assert!(shapley_by_permutations(&t).is_err());
    }

    #[test]
    fn zero_tariffs_cost_nothing() {
        let s = random_tiny_scenario(3).with_scaled_tariffs(0.0);
        let r = brute_force_schedule(&s, &GridSearchSpec::new(3)).unwrap();
        assert_eq!(r.cost, 0.0);
    }
}
