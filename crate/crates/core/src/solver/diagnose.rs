//! Elastic relaxation used to explain solver failures: every equality gets
//! a pair of nonnegative deviation variables, every inequality and cone a
//! nonnegative violation, and their sum is minimized.

use super::ipm::{solve_cone_program, ConeProgram, IpmOutcome, IpmSettings};
use super::presolve::Presolved;

/// A constraint the elastic relaxation could not satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct RowViolation {
    pub row: String,
    pub amount: f64,
}

/// Returns the violated constraints, largest first, or `None` when the
/// relaxation itself failed. An empty list means the problem looks feasible.
pub fn elastic_diagnosis(pre: &Presolved, limit: usize) -> Option<Vec<RowViolation>> {
    let base = &pre.prog;
    let n = base.n;
    let p = base.a.len();
    let lin = base.shape.linear;
    let cones = base.shape.soc.len();
    let extra = 2 * p + lin + cones;
    let total = n + extra;

    let mut a = base.a.clone();
    for (i, row) in a.iter_mut().enumerate() {
        row.push((n + 2 * i, 1.0));
        row.push((n + 2 * i + 1, -1.0));
    }
    let mut g = Vec::with_capacity(extra + base.g.len());
    let mut h = Vec::with_capacity(extra + base.g.len());
    // nonnegativity of the elastic variables
    for k in 0..extra {
        g.push(vec![(n + k, -1.0)]);
        h.push(0.0);
    }
    for (k, row) in base.g.iter().enumerate() {
        let mut row = row.clone();
        if k < lin {
            row.push((n + 2 * p + k, -1.0));
        } else if (k - lin).is_multiple_of(4) {
            row.push((n + 2 * p + lin + (k - lin) / 4, -1.0));
        }
        g.push(row);
        h.push(base.h[k]);
    }
    let mut c = vec![0.0; total];
    c[n..].fill(1.0);
    let mut shape = base.shape.clone();
    shape.linear += extra;
    let prog = ConeProgram {
        n: total,
        p_diag: vec![0.0; total],
        c,
        a,
        b: base.b.clone(),
        g,
        h,
        shape,
    };
    let res = solve_cone_program(
        &prog,
        &IpmSettings {
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            max_iter: 200,
        },
    );
    if res.outcome != IpmOutcome::Converged {
        return None;
    }
    let mut out = Vec::new();
    let threshold = 1e-6;
    for i in 0..p {
        let v = res.x[n + 2 * i] + res.x[n + 2 * i + 1];
        if v > threshold {
            out.push(RowViolation {
                row: pre.eq_names[i].clone(),
                amount: v,
            });
        }
    }
    for k in 0..lin {
        let v = res.x[n + 2 * p + k];
        if v > threshold {
            out.push(RowViolation {
                row: pre.ineq_names[k].clone(),
                amount: v,
            });
        }
    }
    for k in 0..cones {
        let v = res.x[n + 2 * p + lin + k];
        if v > threshold {
            out.push(RowViolation {
                row: pre.cone_names[k].clone(),
                amount: v,
            });
        }
    }
    out.sort_by(|x, y| y.amount.total_cmp(&x.amount).then_with(|| x.row.cmp(&y.row)));
    out.truncate(limit);
    Some(out)
}
