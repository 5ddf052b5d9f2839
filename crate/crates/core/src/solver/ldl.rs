//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices.
//!
//! The pattern is analysed once (minimum-degree ordering, elimination tree,
//! column counts); numeric factorizations then reuse it. Pivots are
//! regularized by their expected sign, so the factorization never breaks
//! down on the KKT systems of the interior-point method.

use std::collections::BTreeSet;

const NONE: usize = usize::MAX;

/// Symmetric minimum-degree ordering. Ties break on the lowest index, so the
/// result is a pure function of the pattern.
pub fn minimum_degree(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(i, j) in edges {
        if i != j {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    let mut eliminated = vec![false; n];
    while let Some((_, v)) = queue.pop_first() {
        eliminated[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &a in &nbrs {
            queue.remove(&(adj[a].len(), a));
            adj[a].remove(&v);
        }
        for (k, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[k + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            debug_assert!(!eliminated[a]);
            queue.insert((adj[a].len(), a));
        }
    }
    order
}

/// Symbolic structure of a permuted upper-triangular matrix.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    /// Column pointers / row indices of the permuted upper triangle.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// For each input entry, its slot in `ax`.
    slot_of_entry: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

/// Numeric factor `P·K·Pᵀ = L·D·Lᵀ`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    li: Vec<usize>,
    lx: Vec<f64>,
    dinv: Vec<f64>,
    /// Number of pivots replaced by the regularization.
    pub bumped: usize,
}

impl LdlSymbolic {
    /// `entries` lists the structural nonzeros `(row, col)` of the symmetric
    /// matrix, one per symmetric pair, diagonal included for every index.
    pub fn analyse(n: usize, entries: &[(usize, usize)]) -> LdlSymbolic {
        let perm = minimum_degree(n, entries);
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mapped: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (inv[i], inv[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        // column-major with rows sorted, duplicates merged
        let mut order: Vec<usize> = (0..mapped.len()).collect();
        order.sort_by_key(|&e| (mapped[e].1, mapped[e].0));
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(mapped.len());
        let mut slot_of_entry = vec![0usize; mapped.len()];
        let mut last: Option<(usize, usize)> = None;
        for &e in &order {
            if last != Some(mapped[e]) {
                ai.push(mapped[e].0);
                ap[mapped[e].1 + 1] += 1;
                last = Some(mapped[e]);
            }
            slot_of_entry[e] = ai.len() - 1;
        }
        for j in 0..n {
            ap[j + 1] += ap[j];
        }

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &i0 in &ai[ap[j]..ap[j + 1]] {
                let mut i = i0;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        LdlSymbolic {
            n,
            perm,
            ap,
            ai,
            slot_of_entry,
            etree,
            lp,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Factorizes the matrix whose entry values are given in the same order
    /// as the `entries` passed to [`analyse`](Self::analyse). `signs[i]` is
    /// the expected pivot sign of original index `i`; pivots smaller than
    /// `eps` or of the wrong sign are replaced by `signs[i]·delta`.
    pub fn factor(&self, values: &[f64], signs: &[f64], eps: f64, delta: f64) -> LdlFactor {
        let n = self.n;
        let mut ax = vec![0.0; self.ai.len()];
        for (e, v) in values.iter().enumerate() {
            ax[self.slot_of_entry[e]] += v;
        }
        let nnz = self.factor_nnz();
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut dinv = vec![0.0; n];
        let mut next = self.lp[..n].to_vec();
        let mut y = vec![0.0; n];
        let mut marked = vec![false; n];
        let mut yidx = Vec::with_capacity(n);
        let mut stack = Vec::with_capacity(n);
        let mut bumped = 0;
        for k in 0..n {
            yidx.clear();
            let mut d = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let i = self.ai[p];
                if i == k {
                    d = ax[p];
                    continue;
                }
                y[i] = ax[p];
                if !marked[i] {
                    marked[i] = true;
                    stack.clear();
                    stack.push(i);
                    let mut nx = self.etree[i];
                    while nx != NONE && nx < k && !marked[nx] {
                        marked[nx] = true;
                        stack.push(nx);
                        nx = self.etree[nx];
                    }
                    while let Some(v) = stack.pop() {
                        yidx.push(v);
                    }
                }
            }
            for &c in yidx.iter().rev() {
                let yc = y[c];
                for j in self.lp[c]..next[c] {
                    y[li[j]] -= lx[j] * yc;
                }
                let slot = next[c];
                li[slot] = k;
                let l = yc * dinv[c];
                lx[slot] = l;
                d -= yc * l;
                next[c] += 1;
                y[c] = 0.0;
                marked[c] = false;
            }
            let sign = signs[self.perm[k]];
            if !(d * sign > eps) {
                d = sign * delta;
                bumped += 1;
            }
            dinv[k] = 1.0 / d;
        }
        LdlFactor {
            li,
            lx,
            dinv,
            bumped,
        }
    }

    /// Solves `K·x = b` with a factor of `K`, in original ordering.
    pub fn solve(&self, f: &LdlFactor, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[f.li[j]] -= f.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= f.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= f.lx[j] * x[f.li[j]];
            }
            x[i] = xi;
        }
        let mut out = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(n: usize, entries: &[(usize, usize)], vals: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for (&(i, j), v) in entries.iter().zip(vals) {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [4 1 0 1; 1 3 1 0; 0 1 -2 0; 1 0 0 -1]
        let entries = vec![(0, 0), (1, 1), (2, 2), (3, 3), (0, 1), (1, 2), (0, 3)];
        let vals = vec![4.0, 3.0, -2.0, -1.0, 1.0, 1.0, 1.0];
        let signs = [1.0, 1.0, -1.0, -1.0];
        let sym = LdlSymbolic::analyse(4, &entries);
        let f = sym.factor(&vals, &signs, 1e-14, 1e-8);
        assert_eq!(f.bumped, 0);
        let b = [1.0, -2.0, 0.5, 3.0];
        let x = sym.solve(&f, &b);
        let r = dense_mul(4, &entries, &vals, &x);
        for i in 0..4 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_sparse_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(5..40);
            let np = n / 2;
            let mut entries: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
            let mut vals: Vec<f64> = (0..n)
                .map(|i| if i < np { rng.gen_range(1.0..3.0) } else { -rng.gen_range(1.0..3.0) })
                .collect();
            for _ in 0..2 * n {
                let i = rng.gen_range(0..np);
                let j = rng.gen_range(np..n);
                entries.push((i, j));
                vals.push(rng.gen_range(-1.0..1.0));
            }
            let signs: Vec<f64> = (0..n).map(|i| if i < np { 1.0 } else { -1.0 }).collect();
            let sym = LdlSymbolic::analyse(n, &entries);
            let f = sym.factor(&vals, &signs, 1e-14, 1e-8);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = sym.solve(&f, &b);
            let r = dense_mul(n, &entries, &vals, &x);
            for i in 0..n {
                assert!((r[i] - b[i]).abs() < 1e-9, "{} vs {}", r[i], b[i]);
            }
        }
    }

    #[test]
    fn ordering_is_a_permutation() {
        let edges = vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)];
        let mut p = minimum_degree(5, &edges);
        assert_eq!(p[0], 4);
        p.sort();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
    }
}
