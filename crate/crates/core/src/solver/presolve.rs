//! Reduction of a [`ProgramIr`] to the standard cone form: singleton
//! equalities fix their variable, fixed variables are substituted, empty
//! rows are checked for consistency and unused columns are dropped.

use super::cone::ConeShape;
use super::ipm::{ConeProgram, RowMatrix};
use crate::program::{LinearRow, ProgramIr};

#[derive(Debug, Clone, PartialEq)]
pub enum PresolveError {
    /// A row whose variables are all fixed is violated.
    Infeasible { row: String, violation: f64 },
    /// A variable with a linear cost appears in no constraint.
    Unbounded { var: String },
}

#[derive(Debug, Clone)]
pub struct Presolved {
    pub prog: ConeProgram,
    /// Original column of each reduced column.
    pub col_map: Vec<usize>,
    /// Value of each original column removed by presolve.
    pub fixed: Vec<Option<f64>>,
    pub eq_names: Vec<String>,
    /// Names of the orthant rows of `G`.
    pub ineq_names: Vec<String>,
    pub cone_names: Vec<String>,
}

impl Presolved {
    /// Expands a reduced primal vector to the original columns.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full: Vec<f64> = self.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (r, &c) in self.col_map.iter().enumerate() {
            full[c] = x[r];
        }
        full
    }
}

fn tolerance(row: &LinearRow) -> f64 {
    let scale = 1.0 + row.rhs.abs() + row.terms.iter().map(|(_, a)| a.abs()).sum::<f64>();
    1e-9 * scale
}

/// Splits a row into its free terms and the right-hand side left after
/// moving fixed terms over.
fn reduce(row: &LinearRow, fixed: &[Option<f64>]) -> (Vec<(usize, f64)>, f64) {
    let mut rhs = row.rhs;
    let mut active: Vec<(usize, f64)> = Vec::with_capacity(row.terms.len());
    for &(c, a) in &row.terms {
        match fixed[c] {
            Some(v) => rhs -= a * v,
            None => {
                if let Some(t) = active.iter_mut().find(|t| t.0 == c) {
                    t.1 += a;
                } else {
                    active.push((c, a));
                }
            }
        }
    }
    active.retain(|(_, a)| *a != 0.0);
    (active, rhs)
}

pub fn presolve(ir: &ProgramIr) -> Result<Presolved, PresolveError> {
    let n = ir.num_vars();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    loop {
        let mut changed = false;
        for row in &ir.equalities {
            let (active, rhs) = reduce(row, &fixed);
            match active.len() {
                0 => {
                    if rhs.abs() > tolerance(row) {
                        return Err(PresolveError::Infeasible {
                            row: row.name.clone(),
                            violation: rhs.abs(),
                        });
                    }
                }
                1 => {
                    fixed[active[0].0] = Some(rhs / active[0].1);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }

    let mut used = vec![false; n];
    let mut eq_rows = Vec::new();
    for row in &ir.equalities {
        let (active, rhs) = reduce(row, &fixed);
        if active.len() >= 2 {
            for (c, _) in &active {
                used[*c] = true;
            }
            eq_rows.push((row.name.clone(), active, rhs));
        }
    }
    let mut ineq_rows = Vec::new();
    for row in &ir.inequalities {
        let (active, rhs) = reduce(row, &fixed);
        if active.is_empty() {
            if rhs < -tolerance(row) {
                return Err(PresolveError::Infeasible {
                    row: row.name.clone(),
                    violation: -rhs,
                });
            }
            continue;
        }
        for (c, _) in &active {
            used[*c] = true;
        }
        ineq_rows.push((row.name.clone(), active, rhs));
    }
    let mut cones = Vec::new();
    for cone in &ir.cones {
        let cols = [cone.w, cone.phi, cone.p, cone.q];
        if cols.iter().all(|c| fixed[*c].is_some()) {
            let v = |c: usize| fixed[c].unwrap_or(0.0);
            let slack = v(cone.w) * v(cone.phi) - v(cone.p).powi(2) - v(cone.q).powi(2);
            if slack < -1e-9 || v(cone.w) < -1e-9 || v(cone.phi) < -1e-9 {
                return Err(PresolveError::Infeasible {
                    row: cone.name.clone(),
                    violation: (-slack).max(-v(cone.w)).max(-v(cone.phi)),
                });
            }
            continue;
        }
        for c in cols {
            if fixed[c].is_none() {
                used[c] = true;
            }
        }
        cones.push(cone);
    }

    for c in 0..n {
        if fixed[c].is_some() || used[c] {
            continue;
        }
        let (q, l) = (ir.quadratic[c], ir.linear[c]);
        if q > 0.0 {
            fixed[c] = Some(-l / (2.0 * q));
        } else if l != 0.0 {
            return Err(PresolveError::Unbounded {
                var: ir.layout.name(c),
            });
        } else {
            fixed[c] = Some(0.0);
        }
    }

    let col_map: Vec<usize> = (0..n).filter(|c| fixed[*c].is_none()).collect();
    let mut reduced_of = vec![usize::MAX; n];
    for (r, &c) in col_map.iter().enumerate() {
        reduced_of[c] = r;
    }
    let remap = |terms: &[(usize, f64)], sign: f64| -> Vec<(usize, f64)> {
        terms.iter().map(|(c, a)| (reduced_of[*c], sign * a)).collect()
    };

    let mut a: RowMatrix = Vec::new();
    let mut b = Vec::new();
    let mut eq_names = Vec::new();
    for (name, terms, rhs) in eq_rows {
        a.push(remap(&terms, 1.0));
        b.push(rhs);
        eq_names.push(name);
    }
    let mut g: RowMatrix = Vec::new();
    let mut h = Vec::new();
    let mut ineq_names = Vec::new();
    for (name, terms, rhs) in ineq_rows {
        g.push(remap(&terms, 1.0));
        h.push(rhs);
        ineq_names.push(name);
    }
    let linear = g.len();
    let mut cone_names = Vec::new();
    for cone in &cones {
        // (w + phi, w - phi, 2p, 2q) must lie in the second-order cone
        let parts: [Vec<(usize, f64)>; 4] = [
            vec![(cone.w, 1.0), (cone.phi, 1.0)],
            vec![(cone.w, 1.0), (cone.phi, -1.0)],
            vec![(cone.p, 2.0)],
            vec![(cone.q, 2.0)],
        ];
        for expr in parts {
            let mut constant = 0.0;
            let mut terms = Vec::new();
            for (c, k) in expr {
                match fixed[c] {
                    Some(v) => constant += k * v,
                    None => terms.push((reduced_of[c], -k)),
                }
            }
            g.push(terms);
            h.push(constant);
        }
        cone_names.push(cone.name.clone());
    }

    let p_diag = col_map.iter().map(|&c| 2.0 * ir.quadratic[c]).collect();
    let c = col_map.iter().map(|&c| ir.linear[c]).collect();
    let prog = ConeProgram {
        n: col_map.len(),
        p_diag,
        c,
        a,
        b,
        g,
        h,
        shape: ConeShape {
            linear,
            soc: vec![4; cones.len()],
        },
    };
    Ok(Presolved {
        prog,
        col_map,
        fixed,
        eq_names,
        ineq_names,
        cone_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{RotatedCone, VarKey, VariableLayout};

    fn ir(n: usize) -> ProgramIr {
        let mut layout = VariableLayout::new();
        for t in 0..n {
            layout.push(VarKey::interface(t));
        }
        ProgramIr::new(layout)
    }

    #[test]
    fn singleton_chain_is_propagated() {
        let mut p = ir(3);
        p.equalities.push(LinearRow::new("a", vec![(0, 2.0)], 4.0));
        p.equalities.push(LinearRow::new("b", vec![(0, 1.0), (1, 1.0)], 5.0));
        p.equalities.push(LinearRow::new("c", vec![(1, 1.0), (2, -1.0)], 0.0));
        let pre = presolve(&p).unwrap();
        assert_eq!(pre.prog.n, 0);
        assert_eq!(pre.fixed, vec![Some(2.0), Some(3.0), Some(3.0)]);
    }

    #[test]
    fn inconsistent_rows_are_named() {
        let mut p = ir(2);
        p.equalities.push(LinearRow::new("pin", vec![(0, 1.0)], 1.0));
        p.inequalities.push(LinearRow::new("cap", vec![(0, 1.0)], 0.5));
        p.inequalities.push(LinearRow::new("free", vec![(1, 1.0)], 0.5));
        match presolve(&p) {
            Err(PresolveError::Infeasible { row, violation }) => {
                assert_eq!(row, "cap");
                assert!((violation - 0.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fixed_cone_columns_move_to_constant() {
        let mut p = ir(4);
        p.equalities.push(LinearRow::new("w", vec![(2, 1.0)], 1.0));
        p.cones.push(RotatedCone {
            name: "k".into(),
            p: 0,
            q: 1,
            w: 2,
            phi: 3,
        });
        p.linear[3] = 1.0;
        let pre = presolve(&p).unwrap();
        assert_eq!(pre.prog.n, 3);
        assert_eq!(pre.prog.shape.soc, vec![4]);
        assert_eq!(pre.prog.h, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(pre.expand(&[7.0, 8.0, 9.0]), vec![7.0, 8.0, 1.0, 9.0]);
    }

    #[test]
    fn objective_only_column_is_unbounded() {
        let mut p = ir(1);
        p.linear[0] = 1.0;
        assert!(matches!(presolve(&p), Err(PresolveError::Unbounded { .. })));
        let mut p = ir(1);
        p.linear[0] = -2.0;
        p.quadratic[0] = 1.0;
        assert_eq!(presolve(&p).unwrap().fixed, vec![Some(1.0)]);
    }
}
