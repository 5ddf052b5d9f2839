//! Interior-point solver for the LP/QP/SOCP programs produced by
//! [`crate::program`], with post-solve physical consistency checks and the
//! complementarity repair pass.

pub mod cone;
mod diagnose;
pub mod ipm;
pub mod ldl;
mod physical;
mod presolve;
mod repair;

use serde::Serialize;

use crate::program::ProgramIr;
use crate::scenario::Options;

pub use diagnose::RowViolation;
pub use ipm::IterationRecord;
pub use physical::{verify_physicality, PhysicalityReport};
pub use presolve::{presolve, PresolveError, Presolved};
pub use repair::{repair_complementarity, solve_problem, RepairOutcome, SolveFailure, Solved};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Scaled primal and dual residual tolerance.
    pub feas_tol: f64,
    /// Duality gap tolerance relative to `max(1, |objective|)`.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Threshold on `l⁺·l⁻` and `v·l⁻` products (kW²).
    pub complementarity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions::from(&Options::default())
    }
}

impl From<&Options> for SolverOptions {
    fn from(o: &Options) -> Self {
        SolverOptions {
            feas_tol: o.feas_tol,
            gap_tol: o.gap_tol,
            max_iter: o.max_iter,
            complementarity_tol: o.complementarity_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    /// Primal values for every column of the program.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Absolute complementarity gap `sᵀz`.
    pub gap: f64,
    pub relative_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    /// Most violated constraints when the program is infeasible.
    pub diagnosis: Vec<RowViolation>,
    /// Filled for optimal solutions.
    pub checks: Option<PhysicalityReport>,
}

impl Solution {
    fn failed(status: Status, n: usize, diagnosis: Vec<RowViolation>) -> Solution {
        Solution {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
            gap: f64::NAN,
            relative_gap: f64::NAN,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            iterations: 0,
            trace: Vec::new(),
            diagnosis,
            checks: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Solves a program to optimality or reports why it could not.
///
/// # Panics
/// If the program violates its structural invariants.
pub fn solve(ir: &ProgramIr, opts: &SolverOptions) -> Solution {
    if let Err(e) = ir.check() {
        panic!("malformed program: {e}");
    }
    let pre = match presolve(ir) {
        Ok(p) => p,
        Err(PresolveError::Infeasible { row, violation }) => {
            return Solution::failed(
                Status::Infeasible,
                ir.num_vars(),
                vec![RowViolation {
                    row,
                    amount: violation,
                }],
            )
        }
        Err(PresolveError::Unbounded { var }) => {
            return Solution::failed(
                Status::Unbounded,
                ir.num_vars(),
                vec![RowViolation {
                    row: var,
                    amount: f64::INFINITY,
                }],
            )
        }
    };
    let res = ipm::solve_cone_program(
        &pre.prog,
        &ipm::IpmSettings {
            feas_tol: opts.feas_tol,
            gap_tol: opts.gap_tol,
            max_iter: opts.max_iter,
        },
    );
    let x = pre.expand(&res.x);
    let (status, diagnosis) = match res.outcome {
        ipm::IpmOutcome::Converged | ipm::IpmOutcome::ConvergedReduced => {
            (Status::Optimal, Vec::new())
        }
        ipm::IpmOutcome::Diverged => (Status::Unbounded, Vec::new()),
        ipm::IpmOutcome::IterationLimit | ipm::IpmOutcome::Stalled => {
            match diagnose::elastic_diagnosis(&pre, 5) {
                Some(v) if !v.is_empty() => (Status::Infeasible, v),
                _ => (Status::IterLimit, Vec::new()),
            }
        }
    };
    let mut sol = Solution {
        status,
        objective: ir.objective(&x),
        x,
        gap: res.gap,
        relative_gap: res.relative_gap,
        primal_residual: res.primal_residual,
        dual_residual: res.dual_residual,
        iterations: res.iterations,
        trace: res.trace,
        diagnosis,
        checks: None,
    };
    if sol.is_optimal() {
        sol.checks = Some(verify_physicality(&sol, ir, opts.complementarity_tol));
    }
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{LinearRow, RotatedCone, VarKey, VariableLayout};

    fn program(n: usize) -> ProgramIr {
        let mut layout = VariableLayout::new();
        for t in 0..n {
            layout.push(VarKey::interface(t));
        }
        ProgramIr::new(layout)
    }

    #[test]
    fn min_x_above_one() {
        let mut ir = program(1);
        ir.linear[0] = 1.0;
        ir.inequalities.push(LinearRow::new("lb", vec![(0, -1.0)], -1.0));
        let sol = solve(&ir, &SolverOptions::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-8);
        assert!(sol.relative_gap <= 1e-8);
    }

    #[test]
    fn min_sum_of_squares_on_a_line() {
        let mut ir = program(2);
        ir.quadratic = vec![1.0, 1.0];
        ir.equalities.push(LinearRow::new("sum", vec![(0, 1.0), (1, 1.0)], 2.0));
        let sol = solve(&ir, &SolverOptions::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_program_names_rows() {
        let mut ir = program(2);
        ir.linear = vec![1.0, 1.0];
        ir.inequalities.push(LinearRow::new("x_small", vec![(0, 1.0)], -1.0));
        ir.inequalities.push(LinearRow::new("x_large", vec![(0, -1.0), (1, 0.0)], -1.0));
        ir.inequalities.push(LinearRow::new("y_lb", vec![(1, -1.0)], 0.0));
        let sol = solve(&ir, &SolverOptions::default());
        assert_eq!(sol.status, Status::Infeasible);
        assert!(!sol.diagnosis.is_empty());
        assert!(sol
            .diagnosis
            .iter()
            .all(|d| d.row == "x_small" || d.row == "x_large"));
    }

    #[test]
    fn unbounded_program_detected() {
        let mut ir = program(2);
        ir.linear = vec![-1.0, 0.0];
        ir.equalities.push(LinearRow::new("tie", vec![(0, 1.0), (1, -1.0)], 0.0));
        let sol = solve(&ir, &SolverOptions::default());
        assert_ne!(sol.status, Status::Optimal);
    }

    #[test]
    fn rotated_cone_minimum() {
        // min w + phi s.t. p = 1, q = 0, p² + q² <= w·phi  → w = phi = 1
        let mut ir = program(4);
        ir.linear[2] = 1.0;
        ir.linear[3] = 1.0;
        ir.equalities.push(LinearRow::new("p", vec![(0, 1.0)], 1.0));
        ir.equalities.push(LinearRow::new("q", vec![(1, 1.0)], 0.0));
        ir.cones.push(RotatedCone {
            name: "k".into(),
            p: 0,
            q: 1,
            w: 2,
            phi: 3,
        });
        let sol = solve(&ir, &SolverOptions::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[2] - 1.0).abs() < 1e-6 && (sol.x[3] - 1.0).abs() < 1e-6, "{:?}", sol.x);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let mut ir = program(3);
        ir.quadratic = vec![0.5, 1.0, 2.0];
        ir.linear = vec![-1.0, 0.3, 0.0];
        ir.equalities.push(LinearRow::new("s", vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0));
        ir.inequalities.push(LinearRow::new("c", vec![(0, 1.0)], 0.4));
        let a = solve(&ir, &SolverOptions::default());
        let b = solve(&ir, &SolverOptions::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }
}
