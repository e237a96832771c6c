//! Sparse direct solves: reverse Cuthill–McKee ordering followed by a banded
//! LU factorization with partial pivoting.
//!
//! An optional linear constraint `cᵀx = 0` is appended as a bordering row and
//! column (used for the zero-mean pressure gauge). The bordered system is
//! solved exactly through a rank-one diagonal shift of the band matrix, so the
//! dense border never enters the band.

use std::collections::VecDeque;

use super::sparse::SparseOperator;
use crate::error::{Error, Result};
use crate::scalar::{lit, max_abs, to_f64, Scalar};

/// Banded LU factors, row-major with `2 kl + ku + 1` stored columns per row.
#[derive(Clone, Debug)]
struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn factor(n: usize, kl: usize, ku: usize, entries: impl Iterator<Item = (usize, usize, T)>) -> Result<Self> {
        let width = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, width, a: vec![T::zero(); n * width], piv: vec![0; n] };
        let mut scale = T::zero();
        for (i, j, v) in entries {
            let k = lu.at(i, j);
            lu.a[k] += v;
            scale = scale.max(v.abs());
        }
        let tiny = scale * T::epsilon() * lit(16.0);
        let reach = kl + ku;
        let (mut pmin, mut pmax) = (T::infinity(), T::zero());
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.a[lu.at(k, k)].abs();
            for i in k + 1..=last {
                let v = lu.a[lu.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.piv[k] = p;
            if !(best > tiny) {
                return Err(Error::Singular {
                    row: k,
                    pivot: to_f64(best),
                    ratio: to_f64(if pmax > T::zero() { pmin / pmax } else { T::zero() }),
                });
            }
            pmin = pmin.min(best);
            pmax = pmax.max(best);
            let jend = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jend {
                    let (x, y) = (lu.at(k, j), lu.at(p, j));
                    lu.a.swap(x, y);
                }
            }
            let pivot = lu.a[lu.at(k, k)];
            let krow = lu.at(k, k);
            for i in k + 1..=last {
                let ik = lu.at(i, k);
                let l = lu.a[ik] / pivot;
                lu.a[ik] = l;
                if l == T::zero() {
                    continue;
                }
                let irow = lu.at(i, k);
                for off in 1..=(jend - k) {
                    let u = lu.a[krow + off];
                    lu.a[irow + off] -= l * u;
                }
            }
        }
        Ok(lu)
    }

    fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.a[self.at(i, k)] * bk;
                }
            }
        }
        let reach = self.kl + self.ku;
        for i in (0..n).rev() {
            let mut s = b[i];
            let row = self.at(i, i);
            for off in 1..=reach.min(n - 1 - i) {
                s -= self.a[row + off] * b[i + off];
            }
            b[i] = s / self.a[row];
        }
    }

    fn solve_transpose_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let reach = self.kl + self.ku;
        // Uᵀ z = b
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(reach)..i {
                s -= self.a[self.at(j, i)] * b[j];
            }
            b[i] = s / self.a[self.at(i, i)];
        }
        // apply the elimination steps transposed, in reverse
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                s -= self.a[self.at(i, k)] * b[i];
            }
            b[k] = s;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }
}

/// Reverse Cuthill–McKee permutation: `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, &degree, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Vec<usize>> {
    let mut seen = std::collections::HashSet::from([start]);
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in &adj[v] {
                if seen.insert(w) {
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut start = seed;
    let mut ecc = bfs_levels(adj, start).len();
    for _ in 0..8 {
        let levels = bfs_levels(adj, start);
        let cand = *levels.last().unwrap().iter().min_by_key(|&&w| (degree[w], w)).unwrap();
        let e = bfs_levels(adj, cand).len();
        if e <= ecc {
            break;
        }
        ecc = e;
        start = cand;
    }
    start
}

/// Factorized operator, optionally bordered by one constraint row/column.
#[derive(Clone, Debug)]
pub struct LinearSolver<T> {
    n: usize,
    perm: Vec<usize>,
    lu: BandLu<T>,
    border: Option<Border<T>>,
}

#[derive(Clone, Debug)]
struct Border<T> {
    c: Vec<(usize, T)>,
    /// Index of the shifted diagonal entry.
    j: usize,
    sigma: T,
    s: Vec<T>,
    t: Vec<T>,
    s_tr: Vec<T>,
    t_tr: Vec<T>,
}

impl<T: Scalar> LinearSolver<T> {
    /// Factorizes `op`, or the bordered system `[op c; cᵀ 0]` when a
    /// constraint is given (sparse list of `(index, weight)`).
    pub fn factor(op: &SparseOperator<T>, constraint: Option<&[(usize, T)]>) -> Result<Self> {
        let n = op.dim();
        if !op.all_finite() {
            return Err(Error::InvalidParameter("operator has non-finite entries".into()));
        }
        let (row_ptr, cols, _) = op.parts();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for &j in &cols[row_ptr[i]..row_ptr[i + 1]] {
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0, 0);
        for (i, j, _) in op.iter() {
            let (pi, pj) = (inv[i], inv[j]);
            if pi > pj {
                kl = kl.max(pi - pj);
            } else {
                ku = ku.max(pj - pi);
            }
        }
        let shift = constraint.map(|c| {
            let &(j, _) = c
                .iter()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .expect("constraint must not be empty");
            let sigma = op.max_abs().max(T::one());
            (j, sigma)
        });
        let entries = op
            .iter()
            .map(|(i, j, v)| (inv[i], inv[j], v))
            .chain(shift.map(|(j, sigma)| (inv[j], inv[j], sigma)));
        let lu = BandLu::factor(n, kl, ku, entries)?;
        let mut solver = Self { n, perm, lu, border: None };
        if let (Some(c), Some((j, sigma))) = (constraint, shift) {
            let mut cvec = vec![T::zero(); n];
            for &(i, w) in c {
                cvec[i] += w;
            }
            let mut ej = vec![T::zero(); n];
            ej[j] = T::one();
            let s = solver.raw_solve(&cvec, false);
            let t = solver.raw_solve(&ej, false);
            let s_tr = solver.raw_solve(&cvec, true);
            let t_tr = solver.raw_solve(&ej, true);
            solver.border = Some(Border { c: c.to_vec(), j, sigma, s, t, s_tr, t_tr });
        }
        Ok(solver)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Half-bandwidths `(lower, upper)` after reordering.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.lu.kl, self.lu.ku)
    }

    fn raw_solve(&self, rhs: &[T], transpose: bool) -> Vec<T> {
        let mut b: Vec<T> = self.perm.iter().map(|&old| rhs[old]).collect();
        if transpose {
            self.lu.solve_transpose_in_place(&mut b);
        } else {
            self.lu.solve_in_place(&mut b);
        }
        let mut x = vec![T::zero(); self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = b[new];
        }
        x
    }

    fn bordered(&self, rhs: &[T], transpose: bool) -> Vec<T> {
        let a = self.raw_solve(rhs, transpose);
        let Some(bd) = &self.border else { return a };
        let (s, t) = if transpose { (&bd.s_tr, &bd.t_tr) } else { (&bd.s, &bd.t) };
        let cdot = |v: &[T]| bd.c.iter().fold(T::zero(), |acc, &(i, w)| acc + w * v[i]);
        // unknowns λ (multiplier) and x_j:
        //   cᵀs λ - σ cᵀt x_j = cᵀa
        //   s_j λ + (1 - σ t_j) x_j = a_j
        let (m00, m01) = (cdot(s), -bd.sigma * cdot(t));
        let (m10, m11) = (s[bd.j], T::one() - bd.sigma * t[bd.j]);
        let (r0, r1) = (cdot(&a), a[bd.j]);
        let det = m00 * m11 - m01 * m10;
        let lambda = (r0 * m11 - m01 * r1) / det;
        let xj = (m00 * r1 - m10 * r0) / det;
        (0..self.n).map(|i| a[i] - lambda * s[i] + bd.sigma * xj * t[i]).collect()
    }

    /// Solves `A x = b` (with `cᵀx = 0` when bordered).
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        assert_eq!(rhs.len(), self.n);
        self.bordered(rhs, false)
    }

    /// Solves `Aᵀ x = b` with the same factorization.
    pub fn solve_transpose(&self, rhs: &[T]) -> Vec<T> {
        assert_eq!(rhs.len(), self.n);
        self.bordered(rhs, true)
    }
}

/// One-shot solve with a residual check `‖A x − b‖∞ ≤ 1e-9 (1 + ‖b‖∞)`.
pub fn solve_linear<T: Scalar>(op: &SparseOperator<T>, rhs: &[T]) -> Result<Vec<T>> {
    if rhs.len() != op.dim() {
        return Err(Error::Contract(format!("rhs has length {}, operator has {}", rhs.len(), op.dim())));
    }
    let solver = LinearSolver::factor(op, None)?;
    let x = solver.solve(rhs);
    let r: Vec<T> = op.mul_vec(&x).iter().zip(rhs).map(|(a, b)| *a - *b).collect();
    let limit = lit::<T>(1e-9) * (T::one() + max_abs(rhs));
    let res = max_abs(&r);
    if !(res <= limit) {
        let diag: Vec<T> = solver.lu.a.chunks(solver.lu.width).map(|row| row[solver.lu.kl].abs()).collect();
        let ratio = diag.iter().fold(T::infinity(), |m, &d| m.min(d)) / max_abs(&diag);
        return Err(Error::IllConditioned { residual: to_f64(res), ratio: to_f64(ratio) });
    }
    Ok(x)
}
