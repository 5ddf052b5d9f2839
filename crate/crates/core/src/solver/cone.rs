//! Algebra of the product cone `R+^l × Q^{q1} × … × Q^{qk}` and
//! Nesterov–Todd scaling.

/// Shape of the product cone: a nonnegative orthant followed by
/// second-order cones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeShape {
    pub linear: usize,
    pub soc: Vec<usize>,
}

impl ConeShape {
    pub fn dim(&self) -> usize {
        self.linear + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant coordinate and one per cone.
    pub fn degree(&self) -> usize {
        self.linear + self.soc.len()
    }

    /// Offsets and sizes of the second-order blocks.
    pub fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.linear;
        self.soc.iter().map(move |&q| {
            let o = off;
            off += q;
            (o, q)
        })
    }

    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[..self.linear].fill(1.0);
        for (o, _) in self.soc_blocks() {
            e[o] = 1.0;
        }
        e
    }

    /// Smallest "eigenvalue" of `u` with respect to the cone.
    pub fn min_eig(&self, u: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &v in &u[..self.linear] {
            m = m.min(v);
        }
        for (o, q) in self.soc_blocks() {
            m = m.min(u[o] - norm(&u[o + 1..o + q]));
        }
        m
    }

    /// Jordan product `u ∘ v`.
    pub fn product(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..self.linear {
            out[i] = u[i] * v[i];
        }
        for (o, q) in self.soc_blocks() {
            out[o] = dot(&u[o..o + q], &v[o..o + q]);
            for i in 1..q {
                out[o + i] = u[o] * v[o + i] + v[o] * u[o + i];
            }
        }
        out
    }

    /// Solves `lambda ∘ x = d` for `x` (`lambda` interior).
    pub fn divide(&self, lambda: &[f64], d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d.len()];
        for i in 0..self.linear {
            out[i] = d[i] / lambda[i];
        }
        for (o, q) in self.soc_blocks() {
            let l = &lambda[o..o + q];
            let dd = &d[o..o + q];
            let det = soc_det(l);
            let x0 = (l[0] * dd[0] - dot(&l[1..], &dd[1..])) / det;
            out[o] = x0;
            for i in 1..q {
                out[o + i] = (dd[i] - x0 * l[i]) / l[0];
            }
        }
        out
    }

    /// Largest `alpha` such that `u + alpha·d` stays in the cone
    /// (`u` interior); `f64::INFINITY` when unbounded.
    pub fn max_step(&self, u: &[f64], d: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for i in 0..self.linear {
            if d[i] < 0.0 {
                alpha = alpha.min(-u[i] / d[i]);
            }
        }
        for (o, q) in self.soc_blocks() {
            let (u, d) = (&u[o..o + q], &d[o..o + q]);
            let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
            let b = u[0] * d[0] - dot(&u[1..], &d[1..]);
            let c = soc_det(u).max(0.0);
            alpha = alpha.min(smallest_positive_root(a, b, c));
            if d[0] < 0.0 {
                alpha = alpha.min(-u[0] / d[0]);
            }
        }
        alpha
    }
}

/// Smallest positive root of `a·t² + 2b·t + c` (with `c ≥ 0`).
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    if a == 0.0 {
        return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    let qq = -(b + b.signum() * sq);
    let mut best = f64::INFINITY;
    for r in [qq / a, if qq != 0.0 { c / qq } else { f64::INFINITY }] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    if c == 0.0 && b < 0.0 {
        best = 0.0;
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `u0² − ‖u1‖²`, factored to limit cancellation near the boundary.
pub fn soc_det(u: &[f64]) -> f64 {
    let r = norm(&u[1..]);
    (u[0] - r) * (u[0] + r)
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
struct SocScaling {
    beta: f64,
    /// Normalized scaling point.
    wbar: Vec<f64>,
}

impl SocScaling {
    fn apply(&self, v: &[f64], inverse: bool, out: &mut [f64]) {
        let w = &self.wbar;
        let sign = if inverse { -1.0 } else { 1.0 };
        let scale = if inverse { 1.0 / self.beta } else { self.beta };
        let w1v1 = dot(&w[1..], &v[1..]);
        out[0] = scale * (w[0] * v[0] + sign * w1v1);
        let coef = sign * v[0] + w1v1 / (1.0 + w[0]);
        for i in 1..v.len() {
            out[i] = scale * (v[i] + coef * w[i]);
        }
    }
}

/// Nesterov–Todd scaling `W` with `W·z = W⁻¹·s = lambda`. `W` is symmetric.
#[derive(Debug, Clone)]
pub struct Scaling {
    shape: ConeShape,
    diag: Vec<f64>,
    soc: Vec<SocScaling>,
    pub lambda: Vec<f64>,
}

impl Scaling {
    /// Computes the scaling for interior `s` and `z`.
    pub fn new(shape: &ConeShape, s: &[f64], z: &[f64]) -> Scaling {
        let mut diag = Vec::with_capacity(shape.linear);
        let mut lambda = vec![0.0; shape.dim()];
        for i in 0..shape.linear {
            diag.push((s[i] / z[i]).sqrt());
            lambda[i] = (s[i] * z[i]).sqrt();
        }
        let mut soc = Vec::with_capacity(shape.soc.len());
        for (o, q) in shape.soc_blocks() {
            let (s, z) = (&s[o..o + q], &z[o..o + q]);
            let sdet = soc_det(s).max(f64::MIN_POSITIVE).sqrt();
            let zdet = soc_det(z).max(f64::MIN_POSITIVE).sqrt();
            let sb: Vec<f64> = s.iter().map(|v| v / sdet).collect();
            let zb: Vec<f64> = z.iter().map(|v| v / zdet).collect();
            let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
            let mut wbar = vec![0.0; q];
            wbar[0] = (sb[0] + zb[0]) / (2.0 * gamma);
            for i in 1..q {
                wbar[i] = (sb[i] - zb[i]) / (2.0 * gamma);
            }
            let sc = SocScaling {
                beta: (sdet / zdet).sqrt(),
                wbar,
            };
            sc.apply(z, false, &mut lambda[o..o + q]);
            soc.push(sc);
        }
        Scaling {
            shape: shape.clone(),
            diag,
            soc,
            lambda,
        }
    }

    fn apply(&self, v: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.shape.linear {
            out[i] = if inverse { v[i] / self.diag[i] } else { v[i] * self.diag[i] };
        }
        for ((o, q), sc) in self.shape.soc_blocks().zip(&self.soc) {
            sc.apply(&v[o..o + q], inverse, &mut out[o..o + q]);
        }
        out
    }

    pub fn w(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v, false)
    }

    pub fn w_inv(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v, true)
    }

    /// `W²·v`.
    pub fn w2(&self, v: &[f64]) -> Vec<f64> {
        self.w(&self.w(v))
    }

    /// Diagonal of `W²` over the orthant part.
    pub fn w2_linear(&self) -> impl Iterator<Item = f64> + '_ {
        self.diag.iter().map(|d| d * d)
    }

    /// Dense `W²` block of each second-order cone, row-major.
    pub fn w2_blocks(&self) -> Vec<Vec<f64>> {
        self.shape
            .soc_blocks()
            .zip(&self.soc)
            .map(|((_, q), sc)| {
                let b2 = sc.beta * sc.beta;
                let w = &sc.wbar;
                let mut m = vec![0.0; q * q];
                for i in 0..q {
                    for j in 0..q {
                        let jij = if i != j {
                            0.0
                        } else if i == 0 {
                            1.0
                        } else {
                            -1.0
                        };
                        m[i * q + j] = b2 * (2.0 * w[i] * w[j] - jij);
                    }
                }
                m
            })
            .collect()
    }
}
