use std::fmt::Write as _;

use thiserror::Error;

use super::layout::VariableLayout;

/// A named linear row `Σ coef·z[col] (= or ≤) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(name: impl Into<String>, terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        LinearRow {
            name: name.into(),
            terms,
            rhs,
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|(c, a)| a * z[*c]).sum()
    }
}

/// Rotated cone `p² + q² ≤ w·phi` with `w, phi ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedCone {
    pub name: String,
    pub p: usize,
    pub q: usize,
    pub w: usize,
    pub phi: usize,
}

impl RotatedCone {
    /// `w·phi − (p² + q²)`; nonnegative inside the cone.
    pub fn slack(&self, z: &[f64]) -> f64 {
        z[self.w] * z[self.phi] - z[self.p].powi(2) - z[self.q].powi(2)
    }
}

/// Solver-agnostic convex program:
/// minimize `Σ quadratic[j]·z_j² + linear·z + constant`
/// subject to equality rows, `≤` inequality rows and rotated cones.
#[derive(Debug, Clone)]
pub struct ProgramIr {
    pub layout: VariableLayout,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
    pub cones: Vec<RotatedCone>,
    pub quadratic: Vec<f64>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum IrError {
    #[error("row {row} references column {col} but only {cols} exist")]
    ColumnOutOfRange { row: String, col: usize, cols: usize },
    #[error("row {row} has a non-finite coefficient or right-hand side")]
    NonFiniteRow { row: String },
    #[error("objective coefficient of {var} is not finite")]
    NonFiniteObjective { var: String },
    #[error("objective of {var} has negative curvature")]
    NegativeCurvature { var: String },
    #[error("cone {cone} does not reference four distinct columns")]
    BadCone { cone: String },
    #[error("objective vectors have {got} entries, expected {expected}")]
    ObjectiveLength { got: usize, expected: usize },
}

impl ProgramIr {
    pub fn new(layout: VariableLayout) -> Self {
        let n = layout.len();
        ProgramIr {
            layout,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            cones: Vec::new(),
            quadratic: vec![0.0; n],
            linear: vec![0.0; n],
            constant: 0.0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.layout.len()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut f = self.constant;
        for j in 0..z.len() {
            f += self.quadratic[j] * z[j] * z[j] + self.linear[j] * z[j];
        }
        f
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<(), IrError> {
        let cols = self.num_vars();
        for v in [&self.quadratic, &self.linear] {
            if v.len() != cols {
                return Err(IrError::ObjectiveLength {
                    got: v.len(),
                    expected: cols,
                });
            }
        }
        for row in self.equalities.iter().chain(&self.inequalities) {
            if !row.rhs.is_finite() {
                return Err(IrError::NonFiniteRow { row: row.name.clone() });
            }
            for &(col, a) in &row.terms {
                if col >= cols {
                    return Err(IrError::ColumnOutOfRange {
                        row: row.name.clone(),
                        col,
                        cols,
                    });
                }
                if !a.is_finite() {
                    return Err(IrError::NonFiniteRow { row: row.name.clone() });
                }
            }
        }
        for cone in &self.cones {
            let mut idx = [cone.p, cone.q, cone.w, cone.phi];
            idx.sort_unstable();
            if idx.windows(2).any(|w| w[0] == w[1]) || idx[3] >= cols {
                return Err(IrError::BadCone {
                    cone: cone.name.clone(),
                });
            }
        }
        for j in 0..cols {
            if !self.quadratic[j].is_finite() || !self.linear[j].is_finite() {
                return Err(IrError::NonFiniteObjective {
                    var: self.layout.name(j),
                });
            }
            if self.quadratic[j] < 0.0 {
                return Err(IrError::NegativeCurvature {
                    var: self.layout.name(j),
                });
            }
        }
        Ok(())
    }

    pub fn max_equality_residual(&self, z: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|r| (r.eval(z) - r.rhs).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_inequality_violation(&self, z: &[f64]) -> f64 {
        self.inequalities
            .iter()
            .map(|r| (r.eval(z) - r.rhs).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest violation of any cone (including the `w, phi ≥ 0` parts).
    pub fn max_cone_violation(&self, z: &[f64]) -> f64 {
        self.cones
            .iter()
            .map(|c| {
                (-c.slack(z))
                    .max(-z[c.w])
                    .max(-z[c.phi])
                    .max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// Line-stable text listing of the program, one item per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "program vars={} eq={} ineq={} cones={}",
            self.num_vars(),
            self.equalities.len(),
            self.inequalities.len(),
            self.cones.len()
        );
        let term_list = |terms: &[(usize, f64)]| {
            terms
                .iter()
                .map(|(c, a)| format!("{a:+} {}", self.layout.name(*c)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for row in &self.equalities {
            let _ = writeln!(out, "eq {}: {} = {}", row.name, term_list(&row.terms), row.rhs);
        }
        for row in &self.inequalities {
            let _ = writeln!(out, "le {}: {} <= {}", row.name, term_list(&row.terms), row.rhs);
        }
        for c in &self.cones {
            let name = |j| self.layout.name(j);
            let _ = writeln!(
                out,
                "cone {}: {}^2 + {}^2 <= {} * {}",
                c.name,
                name(c.p),
                name(c.q),
                name(c.w),
                name(c.phi)
            );
        }
        for j in 0..self.num_vars() {
            if self.quadratic[j] != 0.0 {
                let _ = writeln!(out, "obj quad {}: {}", self.layout.name(j), self.quadratic[j]);
            }
            if self.linear[j] != 0.0 {
                let _ = writeln!(out, "obj lin {}: {}", self.layout.name(j), self.linear[j]);
            }
        }
        if self.constant != 0.0 {
            let _ = writeln!(out, "obj const: {}", self.constant);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::layout::VarKey;

    fn tiny() -> ProgramIr {
        let mut layout = VariableLayout::new();
        for t in 0..4 {
            layout.push(VarKey::interface(t));
        }
        let mut ir = ProgramIr::new(layout);
        ir.equalities.push(LinearRow::new("e", vec![(0, 1.0), (1, -1.0)], 0.5));
        ir.inequalities.push(LinearRow::new("i", vec![(2, 2.0)], 1.0));
        ir.cones.push(RotatedCone {
            name: "c".into(),
            p: 0,
            q: 1,
            w: 2,
            phi: 3,
        });
        ir.quadratic[0] = 1.0;
        ir.linear[3] = -2.0;
        ir
    }

    #[test]
    fn check_accepts_well_formed() {
        assert_eq!(tiny().check(), Ok(()));
    }

    #[test]
    fn check_rejects_bad_column_and_cone() {
        let mut ir = tiny();
        ir.inequalities[0].terms.push((9, 1.0));
        assert!(matches!(ir.check(), Err(IrError::ColumnOutOfRange { col: 9, .. })));
        let mut ir = tiny();
        ir.cones[0].q = 0;
        assert!(matches!(ir.check(), Err(IrError::BadCone { .. })));
        let mut ir = tiny();
        ir.linear[1] = f64::NAN;
        assert!(matches!(ir.check(), Err(IrError::NonFiniteObjective { .. })));
    }

    #[test]
    fn residuals_and_objective() {
        let ir = tiny();
        let z = [1.0, 0.0, 1.0, 2.0];
        assert_eq!(ir.objective(&z), 1.0 - 4.0);
        assert_eq!(ir.max_equality_residual(&z), 0.5);
        assert_eq!(ir.max_inequality_violation(&z), 1.0);
        assert_eq!(ir.max_cone_violation(&z), 0.0);
        assert_eq!(ir.max_cone_violation(&[2.0, 0.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn dump_lists_every_item() {
        let text = tiny().dump();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "program vars=4 eq=1 ineq=1 cones=1");
        assert_eq!(lines[1], "eq e: +1 p0[t0] -1 p0[t1] = 0.5");
        assert_eq!(lines[2], "le i: +2 p0[t2] <= 1");
        assert_eq!(lines[3], "cone c: p0[t0]^2 + p0[t1]^2 <= p0[t2] * p0[t3]");
        assert_eq!(lines[4], "obj quad p0[t0]: 1");
        assert_eq!(lines[5], "obj lin p0[t3]: -2");
    }
}
