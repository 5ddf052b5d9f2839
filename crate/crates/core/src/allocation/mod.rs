//! Distribution of the community's optimal cost among its members.
//!
//! All bills are micro-euro integers obtained by largest-remainder rounding,
//! so every budget-balanced scheme sums to its total exactly.

mod coalitions;
mod money;
mod report;

use thiserror::Error;

pub use coalitions::{
    coalition_commodity, coalition_members, fixed_rate_bill, solve_coalition, CoalitionTable,
};
pub use money::{largest_remainder, proportional, MicroEuro, ParseMoneyError};
pub use report::{BillingReport, ReportError, Scheme, SchemeBills};

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("coalition table for {members} members needs {expected} entries, found {found}")]
    IncompleteTable {
        members: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} values per member, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(
        "Shapley shares do not add up: Σ(C_n − φ_n) = {shares} but the commodity optimum is {optimum}"
    )]
    EfficiencyViolated { shares: f64, optimum: f64 },
}

fn check_len(expected: usize, found: usize) -> Result<(), AllocationError> {
    if expected == found {
        Ok(())
    } else {
        Err(AllocationError::LengthMismatch { expected, found })
    }
}

/// `|Q|!(N−|Q|−1)!/N!` for every coalition size `|Q|` in `0..N`.
fn shapley_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            // k!(n-k-1)!/n! = 1 / (n * C(n-1, k))
            let mut binom = 1.0;
            for i in 0..k {
                binom = binom * (n - 1 - i) as f64 / (i + 1) as f64;
            }
            1.0 / (n as f64 * binom)
        })
        .collect()
}

/// Shapley value of every player of a characteristic-function game given as
/// a table indexed by member bitmask.
pub fn shapley_values(table: &CoalitionTable) -> Result<Vec<f64>, AllocationError> {
    table.check()?;
    let n = table.members;
    let v = &table.value;
    let weights = shapley_weights(n);
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for q in 0..v.len() {
            if q & bit == 0 {
                *p += weights[q.count_ones() as usize] * (v[q | bit] - v[q]);
            }
        }
    }
    Ok(phi)
}

/// Proportional key on the selfish commodity optima; an equal split when
/// every selfish cost is zero.
pub fn nash_bills(selfish: &[f64], total: f64) -> Vec<MicroEuro> {
    proportional(MicroEuro::from_euro(total), selfish)
}

/// Double key: the community commodity cost is split on the selfish optima
/// net of the Shapley savings, the grid cost on billed energy.
///
/// `commodity_optimum` is the commodity-only optimum of the whole community,
/// `commodity` and `grid` are the two cost parts of the global solution.
pub fn shapley_bills(
    selfish: &[f64],
    phi: &[f64],
    commodity_optimum: f64,
    commodity: f64,
    grid: f64,
    billed_energy: &[f64],
) -> Result<Vec<MicroEuro>, AllocationError> {
    let n = selfish.len();
    check_len(n, phi.len())?;
    check_len(n, billed_energy.len())?;
    let keys: Vec<f64> = selfish.iter().zip(phi).map(|(c, p)| c - p).collect();
    let key_sum: f64 = keys.iter().sum();
    if (key_sum - commodity_optimum).abs() > 1e-6 * commodity_optimum.abs().max(1.0) {
        return Err(AllocationError::EfficiencyViolated {
            shares: key_sum,
            optimum: commodity_optimum,
        });
    }
    let energy: f64 = billed_energy.iter().sum();
    let shares: Vec<f64> = (0..n)
        .map(|i| {
            let c = if commodity_optimum.abs() > 0.0 {
                keys[i] / commodity_optimum * commodity
            } else {
                commodity / n as f64
            };
            let g = if energy > 0.0 {
                billed_energy[i] / energy * grid
            } else {
                grid / n as f64
            };
            c + g
        })
        .collect();
    Ok(largest_remainder(MicroEuro::from_euro(commodity + grid), &shares))
}

/// Bills of a non-cooperative benchmark: each member pays its own commodity
/// cost plus a share of the aggregate grid cost proportional to its billed
/// energy.
pub fn reference_bills(
    commodity: &[f64],
    grid: f64,
    billed_energy: &[f64],
) -> Result<Vec<MicroEuro>, AllocationError> {
    let n = commodity.len();
    check_len(n, billed_energy.len())?;
    let energy: f64 = billed_energy.iter().sum();
    let shares: Vec<f64> = (0..n)
        .map(|i| {
            let g = if energy > 0.0 {
                billed_energy[i] / energy * grid
            } else {
                grid / n as f64
            };
            commodity[i] + g
        })
        .collect();
    let total = commodity.iter().sum::<f64>() + grid;
    Ok(largest_remainder(MicroEuro::from_euro(total), &shares))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euros(v: &[f64]) -> Vec<MicroEuro> {
        v.iter().map(|x| MicroEuro::from_euro(*x)).collect()
    }

    #[test]
    fn weights_sum_to_one_over_subsets() {
        for n in 1..=10usize {
            let w = shapley_weights(n);
            let mut total = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let mut binom = 1.0;
                for i in 0..k {
                    binom = binom * (n - 1 - i) as f64 / (i + 1) as f64;
                }
                total += wk * binom;
            }
            assert!((total - 1.0).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn shapley_examples() {
        let t = CoalitionTable::from_values(2, vec![0.0, 0.0, 0.0, 10.0]).unwrap();
        assert_eq!(shapley_values(&t).unwrap(), vec![5.0, 5.0]);
        let t = CoalitionTable::from_values(2, vec![0.0, 4.0, 0.0, 4.0]).unwrap();
        assert_eq!(shapley_values(&t).unwrap(), vec![4.0, 0.0]);
        // masks: 1={1} 2={2} 3={12} 4={3} 5={13} 6={23} 7={123}
        let t = CoalitionTable::from_values(3, vec![0.0, 1.0, 2.0, 4.0, 3.0, 5.0, 6.0, 9.0])
            .unwrap();
        let phi = shapley_values(&t).unwrap();
        for (p, e) in phi.iter().zip([2.0, 3.0, 4.0]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let t = CoalitionTable {
            members: 3,
            value: vec![0.0; 7],
            optimum: None,
        };
        assert_eq!(
            shapley_values(&t),
            Err(AllocationError::IncompleteTable {
                members: 3,
                expected: 8,
                found: 7
            })
        );
    }

    #[test]
    fn nash_examples() {
        assert_eq!(nash_bills(&[10.0, 10.0], 16.0), euros(&[8.0, 8.0]));
        assert_eq!(nash_bills(&[30.0, 10.0], 32.0), euros(&[24.0, 8.0]));
        assert_eq!(nash_bills(&[0.0, 0.0], 5.0), euros(&[2.5, 2.5]));
    }

    #[test]
    fn shapley_bills_without_savings_scale_commodity() {
        let b = shapley_bills(&[30.0, 10.0], &[0.0, 0.0], 40.0, 20.0, 0.0, &[5.0, 1.0]).unwrap();
        assert_eq!(b, euros(&[15.0, 5.0]));
    }

    #[test]
    fn shapley_bills_identical_members_pay_the_same() {
        let b = shapley_bills(&[12.0, 12.0], &[1.5, 1.5], 21.0, 22.0, 3.0, &[7.0, 7.0]).unwrap();
        assert_eq!(b[0], b[1]);
        assert_eq!(b[0] + b[1], MicroEuro::from_euro(25.0));
    }

    #[test]
    fn shapley_bills_check_efficiency() {
        let err = shapley_bills(&[12.0, 12.0], &[1.0, 1.0], 21.0, 22.0, 3.0, &[7.0, 7.0]);
        assert!(matches!(err, Err(AllocationError::EfficiencyViolated { .. })));
    }

    #[test]
    fn grid_key_follows_energy() {
        let b = shapley_bills(&[10.0, 10.0], &[0.0, 0.0], 20.0, 20.0, 9.0, &[2.0, 1.0]).unwrap();
        assert_eq!(b, euros(&[16.0, 13.0]));
        let r = reference_bills(&[4.0, 1.0], 3.0, &[0.0, 0.0]).unwrap();
        assert_eq!(r, euros(&[5.5, 2.5]));
    }
}
