//! Sparse matrices with a structurally symmetric pattern and a direct solver.
//!
//! The solver is a profile (skyline) LU factorization without pivoting, run
//! on a reverse Cuthill-McKee ordering of the pattern. Pivoting is not needed
//! for the systems assembled here: up to a sign change of row blocks they are
//! symmetric positive definite.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Compressed-row sparsity pattern, symmetric and including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// `perm[new] = old` (reverse Cuthill-McKee).
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
}

impl SparsePattern {
    /// Build from `(row, col)` pairs; the transpose and the diagonal are added.
    pub fn new(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (i, j) in entries {
            assert!(i < n && j < n, "pattern entry ({i}, {j}) out of range for n = {n}");
            rows[i].push(j);
            rows[j].push(i);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        let perm = reverse_cuthill_mckee(n, &row_ptr, &cols);
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        SparsePattern {
            n,
            row_ptr,
            cols,
            perm,
            inv_perm,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i).binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Fill-reducing ordering, `perm[new] = old`.
    pub fn ordering(&self) -> &[usize] {
        &self.perm
    }

    /// Profile size (strictly lower part) under the fill-reducing ordering.
    pub fn profile(&self) -> usize {
        first_columns(self).iter().enumerate().map(|(i, &f)| i - f).sum()
    }
}

fn reverse_cuthill_mckee(n: usize, row_ptr: &[usize], cols: &[usize]) -> Vec<usize> {
    let degree = |i: usize| row_ptr[i + 1] - row_ptr[i];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree(i), i));
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(cols[row_ptr[v]..row_ptr[v + 1]].iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree(w), w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// First structurally nonzero column of each permuted row.
fn first_columns(p: &SparsePattern) -> Vec<usize> {
    (0..p.n)
        .map(|new| {
            let old = p.perm[new];
            p.row(old).iter().map(|&j| p.inv_perm[j]).min().unwrap_or(new).min(new)
        })
        .collect()
}

/// A square sparse matrix on a shared [`SparsePattern`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl SparseSystem {
    pub fn new(pattern: Arc<SparsePattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        SparseSystem { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Add `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .pattern
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is not in the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1];
        self.pattern.cols[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.row_entries(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row_entries(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn factor(&self) -> Result<SkylineLu> {
        SkylineLu::new(self)
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(b))
    }
}

/// Profile LU factors `P A P^T = L U` with unit lower `L`.
#[derive(Debug, Clone)]
pub struct SkylineLu {
    perm: Vec<usize>,
    first: Vec<usize>,
    /// Row `i` of `L` over columns `first[i]..i`.
    lower: Vec<Vec<f64>>,
    /// Column `i` of `U` over rows `first[i]..i`.
    upper: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

/// Relative pivot size below which the matrix is reported singular.
const PIVOT_TOL: f64 = 1e-14;

impl SkylineLu {
    pub fn new(a: &SparseSystem) -> Result<Self> {
        let p = &*a.pattern;
        let n = p.n;
        let first = first_columns(p);
        let mut lower: Vec<Vec<f64>> = first.iter().enumerate().map(|(i, &f)| vec![0.0; i - f]).collect();
        let mut upper = lower.clone();
        let mut diag = vec![0.0; n];
        let mut row_scale = vec![0.0f64; n];
        for new in 0..n {
            let old = p.perm[new];
            for (j_old, v) in a.row_entries(old) {
                let j = p.inv_perm[j_old];
                row_scale[new] = row_scale[new].max(v.abs());
                match j.cmp(&new) {
                    std::cmp::Ordering::Less => lower[new][j - first[new]] = v,
                    std::cmp::Ordering::Equal => diag[new] = v,
                    std::cmp::Ordering::Greater => upper[j][new - first[j]] = v,
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                // U[j][i] = A[j][i] - sum_k L[j][k] U[k][i]
                let mut s = 0.0;
                for k in k0..j {
                    s += lower[j][k - fj] * upper[i][k - fi];
                }
                upper[i][j - fi] -= s;
                // L[i][j] = (A[i][j] - sum_k L[i][k] U[k][j]) / U[j][j]
                let mut s = 0.0;
                for k in k0..j {
                    s += lower[i][k - fi] * upper[j][k - fj];
                }
                lower[i][j - fi] = (lower[i][j - fi] - s) / diag[j];
            }
            let mut s = 0.0;
            for k in fi..i {
                s += lower[i][k - fi] * upper[i][k - fi];
            }
            diag[i] -= s;
            let scale = row_scale[i].max(f64::MIN_POSITIVE);
            if !(diag[i].abs() > PIVOT_TOL * scale) {
                return Err(Error::SingularMatrix {
                    pivot: p.perm[i],
                    value: diag[i].abs(),
                });
            }
        }
        Ok(SkylineLu {
            perm: p.perm.clone(),
            first,
            lower,
            upper,
            diag,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        assert_eq!(b.len(), n, "right-hand side has wrong length");
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let s: f64 = self.lower[i].iter().zip(&y[fi..i]).map(|(l, y)| l * y).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            y[i] /= self.diag[i];
            let yi = y[i];
            let fi = self.first[i];
            for (k, u) in self.upper[i].iter().enumerate() {
                y[fi + k] -= u * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
