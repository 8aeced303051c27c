//! Sparse matrices, graph coloring for finite-difference Jacobians, and
//! linear solvers (direct sparse LU and ILU(0)-preconditioned BiCGSTAB).

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinAlgError {
    #[error("matrix is numerically singular")]
    Singular,
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("iterative solver did not converge within {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Compressed sparse row matrix with a frozen pattern and mutable values.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, trips: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in trips {
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n_rows, n_cols, row_ptr, col_idx, values }
    }

    /// Builds a zero matrix with the given pattern (sorted, deduplicated).
    pub fn from_pattern(n_cols: usize, rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for cols in rows {
            let mut cs = cols.clone();
            cs.sort_unstable();
            cs.dedup();
            col_idx.extend_from_slice(&cs);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self { n_rows: rows.len(), n_cols, row_ptr, col_idx, values: vec![0.0; nnz] }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Slot index of entry (r, c) in the frozen pattern, if present.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].binary_search(&c).ok().map(|k| lo + k)
    }

    pub fn add_at_slot(&mut self, slot: usize, v: f64) {
        self.values[slot] += v;
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(out.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            out[r] = s;
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, LinAlgError> {
        let mut trips = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                trips.push(Triplet::new(r, *c, *v));
            }
        }
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &trips)
            .map_err(|e| LinAlgError::Factorization(format!("{e:?}")))
    }
}

/// Direct sparse LU solver. The symbolic factorization is reused while the
/// pattern stays fixed.
pub struct DirectSolver {
    symbolic: Option<(usize, SymbolicLu<usize>)>, // keyed by nnz
    lu: Option<Lu<usize, f64>>,
    n: usize,
}

impl DirectSolver {
    pub fn new() -> Self {
        Self { symbolic: None, lu: None, n: 0 }
    }

    pub fn factorize(&mut self, a: &CsrMatrix) -> Result<(), LinAlgError> {
        if a.n_rows != a.n_cols {
            return Err(LinAlgError::Shape(format!("{}x{} not square", a.n_rows, a.n_cols)));
        }
        let mat = a.to_faer()?;
        let reuse = matches!(&self.symbolic, Some((nnz, _)) if *nnz == a.nnz() && self.n == a.n_rows);
        if !reuse {
            let sym = SymbolicLu::try_new(mat.symbolic())
                .map_err(|e| LinAlgError::Factorization(format!("{e:?}")))?;
            self.symbolic = Some((a.nnz(), sym));
            self.n = a.n_rows;
        }
        let (_, sym) = self.symbolic.as_ref().unwrap();
        let lu = Lu::try_new_with_symbolic(sym.clone(), mat.as_ref())
            .map_err(|e| LinAlgError::Factorization(format!("{e:?}")))?;
        self.lu = Some(lu);
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), LinAlgError> {
        let lu = self.lu.as_ref().ok_or(LinAlgError::Singular)?;
        let rhs = faer::Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = lu.solve(&rhs);
        for (i, v) in b.iter_mut().enumerate() {
            *v = x[(i, 0)];
            if !v.is_finite() {
                return Err(LinAlgError::Singular);
            }
        }
        Ok(())
    }
}

impl Default for DirectSolver {
    fn default() -> Self {
        Self::new()
    }
}

/// ILU(0): incomplete LU factorization keeping the pattern of `a`.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_slots: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinAlgError> {
        let mut lu = a.clone();
        let n = lu.n_rows;
        let mut diag_slots = vec![usize::MAX; n];
        for r in 0..n {
            diag_slots[r] = lu.slot(r, r).ok_or(LinAlgError::Singular)?;
        }
        for i in 0..n {
            let (lo, hi) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for kk in lo..hi {
                let k = lu.col_idx[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag_slots[k]];
                if pivot == 0.0 {
                    return Err(LinAlgError::Singular);
                }
                let lik = lu.values[kk] / pivot;
                lu.values[kk] = lik;
                // subtract lik * row_k(j) for j > k where (i, j) is in the pattern
                let (klo, khi) = (lu.row_ptr[k], lu.row_ptr[k + 1]);
                let mut jj = kk + 1;
                for kslot in klo..khi {
                    let j = lu.col_idx[kslot];
                    if j <= k {
                        continue;
                    }
                    while jj < hi && lu.col_idx[jj] < j {
                        jj += 1;
                    }
                    if jj < hi && lu.col_idx[jj] == j {
                        lu.values[jj] -= lik * lu.values[kslot];
                    }
                }
            }
            if lu.values[diag_slots[i]] == 0.0 {
                return Err(LinAlgError::Singular);
            }
        }
        Ok(Self { lu, diag_slots })
    }

    /// Applies M^{-1} via forward/backward triangular solves.
    pub fn apply(&self, b: &[f64], out: &mut [f64]) {
        let n = self.lu.n_rows;
        out.copy_from_slice(b);
        for i in 0..n {
            let (lo, hi) = (self.lu.row_ptr[i], self.lu.row_ptr[i + 1]);
            let mut s = out[i];
            for k in lo..hi {
                let c = self.lu.col_idx[k];
                if c >= i {
                    break;
                }
                s -= self.lu.values[k] * out[c];
            }
            out[i] = s;
        }
        for i in (0..n).rev() {
            let (_, hi) = (self.lu.row_ptr[i], self.lu.row_ptr[i + 1]);
            let mut s = out[i];
            let dslot = self.diag_slots[i];
            for k in (dslot + 1)..hi {
                s -= self.lu.values[k] * out[self.lu.col_idx[k]];
            }
            out[i] = s / self.lu.values[dslot];
        }
    }
}

/// BiCGSTAB with ILU(0) preconditioning.
pub fn bicgstab_ilu(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    rtol: f64,
    atol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, LinAlgError> {
    let n = a.n_rows();
    let pre = Ilu0::new(a)?;
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bnorm = norm2(b).max(1e-300);
    let target = rtol * bnorm + atol;
    if norm2(&r) <= target {
        return Ok(x);
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(LinAlgError::NoConvergence { iters: it, residual: norm2(&r) });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(&p, &mut phat);
        a.matvec(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
        }
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(x);
        }
        pre.apply(&s, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt < 1e-300 {
            return Err(LinAlgError::NoConvergence { iters: it, residual: norm2(&s) });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= target {
            return Ok(x);
        }
    }
    Err(LinAlgError::NoConvergence { iters: max_iter, residual: norm2(&r) })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Greedy distance-2 coloring of an undirected graph given as adjacency
/// lists. Vertices with the same color have disjoint closed neighborhoods,
/// as required to share a finite-difference perturbation.
pub fn distance2_coloring(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut colors = vec![usize::MAX; n];
    let mut forbidden = vec![usize::MAX; n]; // stamp array
    for v in 0..n {
        // forbid colors of every vertex within distance 2
        for &u in &adj[v] {
            if colors[u] != usize::MAX {
                forbidden[colors[u]] = v;
            }
            for &w in &adj[u] {
                if colors[w] != usize::MAX {
                    forbidden[colors[w]] = v;
                }
            }
        }
        let mut c = 0;
        while forbidden[c] == v {
            c += 1;
        }
        colors[v] = c;
    }
    colors
}

/// Dense LU with partial pivoting, for small systems.
pub struct DenseLu {
    n: usize,
    a: Vec<f64>, // row-major
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factorize(n: usize, a_row_major: &[f64]) -> Result<Self, LinAlgError> {
        let mut a = a_row_major.to_vec();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pk = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    pk = i;
                }
            }
            if best == 0.0 {
                return Err(LinAlgError::Singular);
            }
            if pk != k {
                for j in 0..n {
                    a.swap(k * n + j, pk * n + j);
                }
                piv.swap(k, pk);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let l = a[i * n + k] / pivot;
                a[i * n + k] = l;
                for j in (k + 1)..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Ok(Self { n, a, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.a[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= self.a[i * n + j] * x[j];
            }
            x[i] /= self.a[i * n + i];
        }
        b.copy_from_slice(&x);
    }
}
