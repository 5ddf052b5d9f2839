//! Primal-dual interior-point method (Mehrotra predictor-corrector with
//! Nesterov–Todd scaling) for
//!
//! ```text
//! minimize    ½ xᵀ diag(p) x + cᵀx
//! subject to  A x = b,  G x + s = h,  s ∈ K
//! ```

use super::cone::{dot, ConeShape, Scaling};
use super::ldl::{LdlFactor, LdlSymbolic};

/// Sparse matrix stored by rows.
pub type RowMatrix = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub n: usize,
    pub p_diag: Vec<f64>,
    pub c: Vec<f64>,
    pub a: RowMatrix,
    pub b: Vec<f64>,
    pub g: RowMatrix,
    pub h: Vec<f64>,
    pub shape: ConeShape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_cost: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub step: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmOutcome {
    Converged,
    /// Progress stopped within `INACCURATE_FACTOR` times the tolerances.
    ConvergedReduced,
    IterationLimit,
    /// Search direction could not make progress.
    Stalled,
    /// Iterates diverged.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub outcome: IpmOutcome,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub relative_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

const STATIC_REG: f64 = 1e-9;
const DYN_EPS: f64 = 1e-13;
const DYN_DELTA: f64 = 1e-7;
const REFINE_STEPS: usize = 8;
const STEP_FRACTION: f64 = 0.99;
/// Tolerance relaxation accepted when the iterates stop making progress.
pub const INACCURATE_FACTOR: f64 = 100.0;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn mul(m: &RowMatrix, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().map(|(j, v)| v * x[*j]).sum())
        .collect()
}

fn mul_t_add(m: &RowMatrix, y: &[f64], out: &mut [f64]) {
    for (row, yi) in m.iter().zip(y) {
        for (j, v) in row {
            out[*j] += v * yi;
        }
    }
}

/// KKT system `[P A' G'; A 0 0; G 0 -W²]` with a fixed sparsity pattern.
struct Kkt<'a> {
    prog: &'a ConeProgram,
    entries: Vec<(usize, usize)>,
    signs: Vec<f64>,
    sym: LdlSymbolic,
    /// Index of the first entry of each SOC block's `W²` upper triangle.
    soc_entry_start: Vec<usize>,
    diag_z_start: usize,
}

impl<'a> Kkt<'a> {
    fn new(prog: &'a ConeProgram) -> Self {
        let (n, p, m) = (prog.n, prog.a.len(), prog.shape.dim());
        let dim = n + p + m;
        let mut entries: Vec<(usize, usize)> = (0..dim).map(|i| (i, i)).collect();
        let diag_z_start = n + p;
        for (i, row) in prog.a.iter().enumerate() {
            for (j, _) in row {
                entries.push((*j, n + i));
            }
        }
        for (k, row) in prog.g.iter().enumerate() {
            for (j, _) in row {
                entries.push((*j, n + p + k));
            }
        }
        let mut soc_entry_start = Vec::new();
        for (o, q) in prog.shape.soc_blocks() {
            soc_entry_start.push(entries.len());
            for a in 0..q {
                for b in a + 1..q {
                    entries.push((n + p + o + a, n + p + o + b));
                }
            }
        }
        let signs = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let sym = LdlSymbolic::analyse(dim, &entries);
        Kkt {
            prog,
            entries,
            signs,
            sym,
            soc_entry_start,
            diag_z_start,
        }
    }

    /// Entry values; `w2_lin` / `w2_soc` give the scaling block.
    fn values(&self, w2_lin: &[f64], w2_soc: &[Vec<f64>], reg: f64) -> Vec<f64> {
        let prog = self.prog;
        let (n, p) = (prog.n, prog.a.len());
        let mut vals = Vec::with_capacity(self.entries.len());
        for j in 0..n {
            vals.push(prog.p_diag[j] + reg);
        }
        for _ in 0..p {
            vals.push(-reg);
        }
        for &d in w2_lin {
            vals.push(-d - reg);
        }
        for (blk, (_, q)) in w2_soc.iter().zip(prog.shape.soc_blocks()) {
            for a in 0..q {
                vals.push(-blk[a * q + a] - reg);
            }
        }
        debug_assert_eq!(vals.len(), self.diag_z_start + prog.shape.dim());
        for row in &prog.a {
            for (_, v) in row {
                vals.push(*v);
            }
        }
        for row in &prog.g {
            for (_, v) in row {
                vals.push(*v);
            }
        }
        for (blk, ((_, q), start)) in w2_soc
            .iter()
            .zip(prog.shape.soc_blocks().zip(&self.soc_entry_start))
        {
            debug_assert_eq!(vals.len(), *start);
            for a in 0..q {
                for b in a + 1..q {
                    vals.push(-blk[a * q + b]);
                }
            }
        }
        vals
    }

    /// `K·v` with the unregularized matrix.
    fn apply(&self, scaling: &Scaling, v: &[f64]) -> Vec<f64> {
        let prog = self.prog;
        let (n, p) = (prog.n, prog.a.len());
        let (vx, vy, vz) = (&v[..n], &v[n..n + p], &v[n + p..]);
        let mut out = vec![0.0; v.len()];
        for j in 0..n {
            out[j] = prog.p_diag[j] * vx[j];
        }
        mul_t_add(&prog.a, vy, &mut out[..n]);
        mul_t_add(&prog.g, vz, &mut out[..n]);
        let ax = mul(&prog.a, vx);
        out[n..n + p].copy_from_slice(&ax);
        let gx = mul(&prog.g, vx);
        let w2z = scaling.w2(vz);
        for k in 0..gx.len() {
            out[n + p + k] = gx[k] - w2z[k];
        }
        out
    }

    fn solve(&self, f: &LdlFactor, scaling: &Scaling, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.sym.solve(f, rhs);
        let scale = 1.0 + inf_norm(rhs);
        let mut best = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            let kx = self.apply(scaling, &x);
            let r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
            let err = inf_norm(&r);
            if err <= 1e-13 * scale || err >= best {
                break;
            }
            best = err;
            let dx = self.sym.solve(f, &r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        x
    }
}

struct Residuals {
    rx: Vec<f64>,
    ry: Vec<f64>,
    rz: Vec<f64>,
    pres: f64,
    dres: f64,
    pcost: f64,
}

/// Diagonal scaling applied before solving. The solver works on
/// `x̃ = x / col`, with the rows of `A` and `G` multiplied by `eq_row` and
/// `cone_row`; every second-order cone block shares one row factor.
struct Equilibration {
    col: Vec<f64>,
    eq_row: Vec<f64>,
    cone_row: Vec<f64>,
    /// Norms of the unscaled `b`, `h` and `c`.
    b_norm: f64,
    h_norm: f64,
    c_norm: f64,
}

const RUIZ_PASSES: usize = 15;

fn row_max(m: &RowMatrix) -> Vec<f64> {
    m.iter()
        .map(|r| r.iter().fold(0.0, |a, (_, v)| f64::max(a, v.abs())))
        .collect()
}

fn inv_sqrt_or_one(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v.sqrt()
    } else {
        1.0
    }
}

fn equilibrate(prog: &ConeProgram) -> (ConeProgram, Equilibration) {
    let n = prog.n;
    let mut a = prog.a.clone();
    let mut g = prog.g.clone();
    let mut col = vec![1.0; n];
    let mut eq_row = vec![1.0; a.len()];
    let mut cone_row = vec![1.0; g.len()];
    for _ in 0..RUIZ_PASSES {
        let mut cmax = vec![0.0f64; n];
        for row in a.iter().chain(&g) {
            for (j, v) in row {
                cmax[*j] = cmax[*j].max(v.abs());
            }
        }
        let dc: Vec<f64> = cmax.into_iter().map(inv_sqrt_or_one).collect();
        let da: Vec<f64> = row_max(&a).into_iter().map(inv_sqrt_or_one).collect();
        let mut gmax = row_max(&g);
        for (o, q) in prog.shape.soc_blocks() {
            let m = gmax[o..o + q].iter().fold(0.0f64, |x, y| x.max(*y));
            gmax[o..o + q].iter_mut().for_each(|v| *v = m);
        }
        let dg: Vec<f64> = gmax.into_iter().map(inv_sqrt_or_one).collect();
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut() {
                *v *= da[i] * dc[*j];
            }
            eq_row[i] *= da[i];
        }
        for (k, row) in g.iter_mut().enumerate() {
            for (j, v) in row.iter_mut() {
                *v *= dg[k] * dc[*j];
            }
            cone_row[k] *= dg[k];
        }
        for j in 0..n {
            col[j] *= dc[j];
        }
    }
    let scaled = ConeProgram {
        n,
        p_diag: (0..n).map(|j| prog.p_diag[j] * col[j] * col[j]).collect(),
        c: (0..n).map(|j| prog.c[j] * col[j]).collect(),
        b: prog.b.iter().zip(&eq_row).map(|(b, e)| b * e).collect(),
        h: prog.h.iter().zip(&cone_row).map(|(h, e)| h * e).collect(),
        a,
        g,
        shape: prog.shape.clone(),
    };
    let eq = Equilibration {
        col,
        eq_row,
        cone_row,
        b_norm: inf_norm(&prog.b),
        h_norm: inf_norm(&prog.h),
        c_norm: inf_norm(&prog.c),
    };
    (scaled, eq)
}

fn unscaled_norm(r: &[f64], scale: &[f64]) -> f64 {
    r.iter().zip(scale).fold(0.0, |m, (v, d)| m.max((v / d).abs()))
}

fn residuals(
    prog: &ConeProgram,
    eq: &Equilibration,
    x: &[f64],
    y: &[f64],
    s: &[f64],
    z: &[f64],
) -> Residuals {
    let n = prog.n;
    let mut rx: Vec<f64> = (0..n).map(|j| prog.p_diag[j] * x[j] + prog.c[j]).collect();
    mul_t_add(&prog.a, y, &mut rx);
    mul_t_add(&prog.g, z, &mut rx);
    let ry: Vec<f64> = mul(&prog.a, x).iter().zip(&prog.b).map(|(a, b)| a - b).collect();
    let rz: Vec<f64> = mul(&prog.g, x)
        .iter()
        .zip(s)
        .zip(&prog.h)
        .map(|((g, s), h)| g + s - h)
        .collect();
    let pres = (unscaled_norm(&ry, &eq.eq_row) / (1.0 + eq.b_norm))
        .max(unscaled_norm(&rz, &eq.cone_row) / (1.0 + eq.h_norm));
    let dres = unscaled_norm(&rx, &eq.col) / (1.0 + eq.c_norm);
    let pcost = (0..n)
        .map(|j| 0.5 * prog.p_diag[j] * x[j] * x[j] + prog.c[j] * x[j])
        .sum();
    Residuals {
        rx,
        ry,
        rz,
        pres,
        dres,
        pcost,
    }
}

fn shift_into_cone(shape: &ConeShape, u: &mut [f64]) {
    let e = shape.identity();
    let t = -shape.min_eig(u);
    let nrm = inf_norm(u).max(1.0);
    let shift = if t >= -1e-8 * nrm { 1.0 + t } else { 0.0 };
    for (ui, ei) in u.iter_mut().zip(&e) {
        *ui += shift * ei;
    }
}

/// Step length towards `step`, or zero when the direction is unusable.
fn step_length(
    shape: &ConeShape,
    s: &[f64],
    z: &[f64],
    step: &(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>),
) -> f64 {
    let (dx, _, dz, ds) = step;
    if dx.iter().chain(dz).chain(ds).any(|v| !v.is_finite()) {
        return 0.0;
    }
    let alpha_max = shape.max_step(s, ds).min(shape.max_step(z, dz));
    (STEP_FRACTION * alpha_max).min(1.0)
}

pub fn solve_cone_program(prog: &ConeProgram, settings: &IpmSettings) -> IpmResult {
    let (scaled, eq) = equilibrate(prog);
    let mut res = solve_scaled(&scaled, &eq, settings);
    for (x, d) in res.x.iter_mut().zip(&eq.col) {
        *x *= d;
    }
    for (y, d) in res.y.iter_mut().zip(&eq.eq_row) {
        *y *= d;
    }
    for ((s, z), d) in res.s.iter_mut().zip(res.z.iter_mut()).zip(&eq.cone_row) {
        *s /= d;
        *z *= d;
    }
    res
}

fn solve_scaled(prog: &ConeProgram, eq: &Equilibration, settings: &IpmSettings) -> IpmResult {
    let (n, p, m) = (prog.n, prog.a.len(), prog.shape.dim());
    let shape = &prog.shape;
    let kkt = Kkt::new(prog);

    // initial point from the system with W = I
    let unit = Scaling::new(shape, &shape.identity(), &shape.identity());
    let ones = vec![1.0; shape.linear];
    let eye_blocks: Vec<Vec<f64>> = shape
        .soc
        .iter()
        .map(|&q| {
            let mut b = vec![0.0; q * q];
            for i in 0..q {
                b[i * q + i] = 1.0;
            }
            b
        })
        .collect();
    let f0 = kkt.sym.factor(
        &kkt.values(&ones, &eye_blocks, STATIC_REG),
        &kkt.signs,
        DYN_EPS,
        DYN_DELTA,
    );
    let mut rhs = Vec::with_capacity(n + p + m);
    rhs.extend(prog.c.iter().map(|v| -v));
    rhs.extend_from_slice(&prog.b);
    rhs.extend_from_slice(&prog.h);
    let sol = kkt.solve(&f0, &unit, &rhs);
    let mut x = sol[..n].to_vec();
    let mut y = sol[n..n + p].to_vec();
    let zsol = &sol[n + p..];
    let mut s: Vec<f64> = zsol.iter().map(|v| -v).collect();
    let mut z = zsol.to_vec();
    shift_into_cone(shape, &mut s);
    shift_into_cone(shape, &mut z);
    if m == 0 {
        s.clear();
        z.clear();
    }

    let degree = shape.degree().max(1) as f64;
    let mut trace = Vec::new();
    let mut outcome = IpmOutcome::IterationLimit;
    let mut iterations = 0;
    let mut last_step = 0.0;
    let mut last_sigma = 0.0;
    let mut best = (f64::INFINITY, x.clone(), y.clone(), s.clone(), z.clone());
    loop {
        let r = residuals(prog, eq, &x, &y, &s, &z);
        let gap = dot(&s, &z);
        let rel_gap = gap / r.pcost.abs().max(1.0);
        trace.push(IterationRecord {
            iteration: iterations,
            primal_cost: r.pcost,
            gap,
            primal_residual: r.pres,
            dual_residual: r.dres,
            step: last_step,
            sigma: last_sigma,
        });
        if r.pres <= settings.feas_tol && r.dres <= settings.feas_tol && rel_gap <= settings.gap_tol {
            outcome = IpmOutcome::Converged;
            break;
        }
        // distance to convergence in units of the tolerances
        let merit = (r.pres.max(r.dres) / settings.feas_tol).max(rel_gap / settings.gap_tol);
        if merit < best.0 {
            best = (merit, x.clone(), y.clone(), s.clone(), z.clone());
        } else if merit > 100.0 * best.0 && best.0 <= INACCURATE_FACTOR {
            // a bad direction wrecked a nearly converged iterate
            outcome = IpmOutcome::Stalled;
            break;
        }
        if inf_norm(&x) > 1e12 || inf_norm(&z) > 1e14 {
            outcome = IpmOutcome::Diverged;
            break;
        }
        if iterations >= settings.max_iter {
            break;
        }
        iterations += 1;

        let scaling = Scaling::new(shape, &s, &z);
        let w2_lin: Vec<f64> = scaling.w2_linear().collect();
        let w2_soc = scaling.w2_blocks();
        let lambda = &scaling.lambda;
        let ll = shape.product(lambda, lambda);
        let mu = gap / degree;
        let e = shape.identity();
        let mut sigma = 0.0;
        let mut alpha: f64 = 0.0;
        let mut step = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        // heavier regularization when the scaling is too ill-conditioned
        for reg in [STATIC_REG, 1e-7, 1e-5] {
            let f = kkt.sym.factor(
                &kkt.values(&w2_lin, &w2_soc, reg),
                &kkt.signs,
                DYN_EPS,
                DYN_DELTA.max(reg),
            );

            // solves the Newton system for the complementarity target `ds`
            let direction = |ds: &[f64]| {
                let ld = shape.divide(lambda, ds);
                let wld = scaling.w(&ld);
                let mut rhs = Vec::with_capacity(n + p + m);
                rhs.extend(r.rx.iter().map(|v| -v));
                rhs.extend(r.ry.iter().map(|v| -v));
                rhs.extend(r.rz.iter().zip(&wld).map(|(rz, w)| -rz - w));
                let d = kkt.solve(&f, &scaling, &rhs);
                let dx = d[..n].to_vec();
                let dy = d[n..n + p].to_vec();
                let dz = d[n + p..].to_vec();
                let wdz = scaling.w(&dz);
                let inner: Vec<f64> = ld.iter().zip(&wdz).map(|(a, b)| a - b).collect();
                let ds = scaling.w(&inner);
                (dx, dy, dz, ds)
            };

            let aff_target: Vec<f64> = ll.iter().map(|v| -v).collect();
            let (_, _, dz_a, ds_a) = direction(&aff_target);
            let alpha_aff = shape
                .max_step(&s, &ds_a)
                .min(shape.max_step(&z, &dz_a))
                .min(1.0);
            sigma = (1.0 - alpha_aff).powi(3);
            let corr = shape.product(&scaling.w_inv(&ds_a), &scaling.w(&dz_a));
            let target: Vec<f64> = (0..m)
                .map(|i| -ll[i] - corr[i] + sigma * mu * e[i])
                .collect();
            let mut cand = direction(&target);
            let mut a = step_length(shape, &s, &z, &cand);
            if !(a > 1e-10) {
                // pure centering, without the second-order correction
                let centering: Vec<f64> = (0..m).map(|i| -ll[i] + mu * e[i]).collect();
                cand = direction(&centering);
                a = step_length(shape, &s, &z, &cand);
            }
            if a > alpha {
                (alpha, step) = (a, cand);
            }
            if alpha > 1e-3 {
                break;
            }
        }
        let (dx, dy, dz, ds) = step;
        if !(alpha > 1e-10) {
            outcome = IpmOutcome::Stalled;
            break;
        }
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..p {
            y[i] += alpha * dy[i];
        }
        for k in 0..m {
            s[k] += alpha * ds[k];
            z[k] += alpha * dz[k];
        }
        last_step = alpha;
        last_sigma = sigma;
    }

    if outcome != IpmOutcome::Converged && outcome != IpmOutcome::Diverged && best.0.is_finite() {
        // fall back to the iterate closest to convergence
        let (merit, bx, by, bs, bz) = best;
        (x, y, s, z) = (bx, by, bs, bz);
        if merit <= INACCURATE_FACTOR {
            outcome = IpmOutcome::ConvergedReduced;
        }
    }
    let r = residuals(prog, eq, &x, &y, &s, &z);
    let gap = dot(&s, &z);
    IpmResult {
        outcome,
        relative_gap: gap / r.pcost.abs().max(1.0),
        gap,
        primal_residual: r.pres,
        dual_residual: r.dres,
        x,
        y,
        s,
        z,
        iterations,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> IpmSettings {
        IpmSettings {
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            max_iter: 60,
        }
    }

    #[test]
    fn small_lp() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0
        let prog = ConeProgram {
            n: 2,
            p_diag: vec![0.0, 0.0],
            c: vec![-1.0, -1.0],
            a: vec![],
            b: vec![],
            g: vec![
                vec![(0, 1.0), (1, 2.0)],
                vec![(0, 3.0), (1, 1.0)],
                vec![(0, -1.0)],
                vec![(1, -1.0)],
            ],
            h: vec![4.0, 6.0, 0.0, 0.0],
            shape: ConeShape {
                linear: 4,
                soc: vec![],
            },
        };
        let r = solve_cone_program(&prog, &settings());
        assert_eq!(r.outcome, IpmOutcome::Converged);
        assert!((r.x[0] - 1.6).abs() < 1e-7 && (r.x[1] - 1.2).abs() < 1e-7, "{:?}", r.x);
    }

    #[test]
    fn small_socp() {
        // min t  s.t. ||(x - 1, y - 2)|| <= t, x + y = 0
        // optimum at the projection of (1, 2) onto x + y = 0: t = 3/sqrt(2)
        let prog = ConeProgram {
            n: 3,
            p_diag: vec![0.0; 3],
            c: vec![0.0, 0.0, 1.0],
            a: vec![vec![(0, 1.0), (1, 1.0)]],
            b: vec![0.0],
            g: vec![vec![(2, -1.0)], vec![(0, -1.0)], vec![(1, -1.0)]],
            h: vec![0.0, -1.0, -2.0],
            shape: ConeShape {
                linear: 0,
                soc: vec![3],
            },
        };
        let r = solve_cone_program(&prog, &settings());
        assert_eq!(r.outcome, IpmOutcome::Converged);
        assert!((r.x[2] - 3.0 / 2f64.sqrt()).abs() < 1e-7, "{:?}", r.x);
        assert!((r.x[0] + 0.5).abs() < 1e-6 && (r.x[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn small_qp_with_equality() {
        // min x² + y²  s.t. x + y = 2
        let prog = ConeProgram {
            n: 2,
            p_diag: vec![2.0, 2.0],
            c: vec![0.0, 0.0],
            a: vec![vec![(0, 1.0), (1, 1.0)]],
            b: vec![2.0],
            g: vec![],
            h: vec![],
            shape: ConeShape {
                linear: 0,
                soc: vec![],
            },
        };
        let r = solve_cone_program(&prog, &settings());
        assert_eq!(r.outcome, IpmOutcome::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] - 1.0).abs() < 1e-9);
    }
}
