//! Sparse symmetric matrices and the two linear solvers used by the stepper:
//! a profile (skyline) Cholesky factorization under reverse Cuthill-McKee
//! ordering, and Jacobi-preconditioned conjugate gradients.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Symmetric matrix in compressed-row form, both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Sums duplicate entries. Entries are sorted stably by position and
    /// summed in their original order, so identical triplet sequences give
    /// bit-identical matrices.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trips {
            debug_assert!(i < n && j < n);
            if last == Some((i, j)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSym {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, a)| a * x[j]).sum();
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Reverse Cuthill-McKee ordering of the matrix graph; `perm[new] = old`.
pub fn rcm_ordering(a: &SparseSym) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let root = pseudo_peripheral(a, start, &degree);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a
                .row(v)
                .0
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &SparseSym, root: usize) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; a.n()];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut comp = Vec::new();
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        comp.push(v);
        depth = depth.max(level[v]);
        for &w in a.row(v).0 {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let last: Vec<usize> = comp.into_iter().filter(|&v| level[v] == depth).collect();
    (last, depth)
}

fn pseudo_peripheral(a: &SparseSym, start: usize, degree: &[usize]) -> usize {
    let mut root = start;
    let (mut last, mut depth) = bfs_levels(a, root);
    for _ in 0..8 {
        let cand = *last
            .iter()
            .min_by_key(|&&v| (degree[v], v))
            .expect("level set is nonempty");
        let (l2, d2) = bfs_levels(a, cand);
        if d2 <= depth {
            break;
        }
        root = cand;
        last = l2;
        depth = d2;
    }
    root
}

/// Cholesky factor stored by rows inside the matrix envelope.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
    pivot_ratio: f64,
}

impl SkylineCholesky {
    /// Factors `A` under the given ordering (`perm[new] = old`).
    pub fn factor(a: &SparseSym, perm: Vec<usize>) -> Result<Self> {
        let n = a.n();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old_i, &i) in inv.iter().enumerate() {
            for &old_j in a.row(old_i).0 {
                let j = inv[old_j];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for (old_i, &i) in inv.iter().enumerate() {
            let (c, v) = a.row(old_i);
            for (&old_j, &val) in c.iter().zip(v) {
                let j = inv[old_j];
                if j <= i {
                    data[start[i] + j - first[i]] = val;
                }
            }
        }

        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = &data[start[i] + k0 - fi..start[i] + j - fi];
                let rj = &data[start[j] + k0 - fj..start[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                if j < i {
                    data[start[i] + j - fi] = s / data[start[j] + j - fj];
                } else {
                    if !(s > 1e-14 * scale) {
                        return Err(Error::Numerical {
                            message: format!(
                                "Cholesky pivot {s:e} at row {i} is not positive; the system is singular or indefinite"
                            ),
                            condition: if s > 0.0 { dmax / s } else { f64::INFINITY },
                        });
                    }
                    dmin = dmin.min(s);
                    dmax = dmax.max(s);
                    data[start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(SkylineCholesky {
            perm,
            first,
            start,
            data,
            pivot_ratio: if n == 0 { 1.0 } else { dmax / dmin },
        })
    }

    /// Ratio of largest to smallest squared pivot, a cheap conditioning estimate.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi]
                .iter()
                .zip(&y[fi..i])
                .map(|(l, v)| l * v)
                .sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (l, v) in row[..i - fi].iter().zip(&mut y[fi..i]) {
                *v -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Linear solver choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    /// Skyline Cholesky with reverse Cuthill-McKee ordering.
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
}

impl SolverKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "direct" | "cholesky" => Some(SolverKind::Direct),
            "cg" => Some(SolverKind::Cg),
            _ => None,
        }
    }
}

/// Relative residual tolerance of the iterative solver.
pub const CG_TOL: f64 = 1e-12;

/// A prepared solver for one fixed SPD matrix.
#[derive(Debug, Clone)]
pub enum Factorization {
    Direct(SkylineCholesky),
    Cg {
        matrix: SparseSym,
        inv_diag: Vec<f64>,
    },
}

impl Factorization {
    pub fn new(a: SparseSym, kind: SolverKind) -> Result<Self> {
        match kind {
            SolverKind::Direct => {
                let perm = rcm_ordering(&a);
                Ok(Factorization::Direct(SkylineCholesky::factor(&a, perm)?))
            }
            SolverKind::Cg => {
                let d = a.diag();
                if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
                    return Err(Error::Numerical {
                        message: format!("nonpositive diagonal entry at row {i}"),
                        condition: f64::INFINITY,
                    });
                }
                Ok(Factorization::Cg {
                    inv_diag: d.iter().map(|v| 1.0 / v).collect(),
                    matrix: a,
                })
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            Factorization::Direct(f) => Ok(f.solve(b)),
            Factorization::Cg { matrix, inv_diag } => pcg(matrix, inv_diag, b),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(a: &SparseSym, inv_diag: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 10 * n.max(10);
    for _ in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical {
                message: "conjugate gradients met a nonpositive curvature direction".into(),
                condition: f64::INFINITY,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= CG_TOL * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let dmax = inv_diag.iter().fold(0.0f64, |m, v| m.max(1.0 / v));
    let dmin = inv_diag.iter().fold(f64::INFINITY, |m, v| m.min(1.0 / v));
    Err(Error::Numerical {
        message: format!("conjugate gradients did not converge in {max_iter} iterations"),
        condition: dmax / dmin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// 1D Laplacian plus shift, a tridiagonal SPD matrix.
    fn laplace(n: usize, shift: f64) -> SparseSym {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSym::from_triplets(n, t)
    }

    /// Dense Gaussian elimination with partial pivoting, as an oracle.
    fn dense_solve(a: &SparseSym, b: &[f64]) -> Vec<f64> {
        let n = a.n();
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r: Vec<f64> = (0..n).map(|j| a.get(i, j)).collect();
                r.push(b[i]);
                r
            })
            .collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| m[x][k].abs().total_cmp(&m[y][k].abs()))
                .unwrap();
            m.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a =
            SparseSym::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 2.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.symmetry_defect(), 0.0);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplace(30, 0.1);
        let mut p = rcm_ordering(&a);
        p.sort();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_and_cg_match_dense() {
        let a = laplace(40, 0.01);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
        let want = dense_solve(&a, &b);
        for kind in [SolverKind::Direct, SolverKind::Cg] {
            let f = Factorization::new(a.clone(), kind).unwrap();
            let x = f.solve(&b).unwrap();
            for (p, q) in x.iter().zip(&want) {
                assert!((p - q).abs() < 1e-8 * (1.0 + q.abs()), "{kind:?}");
            }
        }
    }

    #[test]
    fn singular_matrix_reports_numerical_error() {
        let a = laplace(10, 0.0);
        let mut t = Vec::new();
        for i in 0..10 {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                t.push((i, j, x));
            }
        }
        // make it a pure Neumann Laplacian: constant vectors in the kernel
        t.push((0, 0, -1.0));
        t.push((9, 9, -1.0));
        let s = SparseSym::from_triplets(10, t);
        match Factorization::new(s, SolverKind::Direct) {
            Err(Error::Numerical { .. }) => {}
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn skyline_solves_random_spd(seed in 0u64..200, n in 1usize..25) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 1.0));
            }
            // sum of random rank-one updates on sparse supports
            for _ in 0..2 * n {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                t.push((i, i, a * a));
                t.push((j, j, b * b));
                if i != j {
                    t.push((i, j, a * b));
                    t.push((j, i, a * b));
                } else {
                    t.push((i, i, 2.0 * a * b));
                }
            }
            let a = SparseSym::from_triplets(n, t);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = Factorization::new(a.clone(), SolverKind::Direct).unwrap().solve(&b).unwrap();
            let r = a.matvec(&x);
            for (p, q) in r.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
