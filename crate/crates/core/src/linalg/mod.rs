//! Sparse-matrix storage and the linear solvers behind the scheme:
//! conjugate gradients for the symmetric positive definite systems,
//! sparse LU with partial pivoting and BiCGSTAB for the noise-dependent
//! nonsymmetric system.
//!
//! Everything here is deterministic: identical inputs give bitwise
//! identical outputs on one platform/build.

mod lu;
mod solvers;

pub use lu::SparseLu;
pub use solvers::{solve_bicgstab, solve_spd, solve_spd_guess};

use crate::error::{Error, Result};

/// Compressed-row sparse matrix. Column indices are strictly increasing
/// within each row; duplicate triplets are summed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Outcome of a linear solve. `iterations` is 0 for direct methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl SparseMatrix {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in entries {
            if i >= nrows || j >= ncols {
                return Err(Error::invalid(format!(
                    "triplet ({i},{j}) out of bounds for {nrows}x{ncols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut idx = 0;
        for i in 0..nrows {
            while idx < sorted.len() && sorted[idx].0 == i {
                let j = sorted[idx].1;
                let mut v = 0.0;
                while idx < sorted.len() && sorted[idx].0 == i && sorted[idx].1 == j {
                    v += sorted[idx].2;
                    idx += 1;
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds directly from CSR arrays. Used by assembly fast paths where the
    /// pattern is constructed sorted; validates monotone rows in debug builds.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), nrows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        debug_assert!(row_ptr.windows(2).all(|w| w[0] <= w[1]));
        #[cfg(debug_assertions)]
        for r in 0..nrows {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
            debug_assert!(cols.iter().all(|&c| c < ncols));
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// y = A x.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::invalid(format!(
                "spmv dimension mismatch: matrix is {}x{}, vector has {}",
                self.nrows,
                self.ncols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// y = A x without allocation; dimensions must already agree.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// y += alpha * A x.
    pub fn spmv_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] += alpha * acc;
        }
    }

    /// Exact structural transpose (deterministic entry order).
    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = counts;
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let dst = next[j];
                col_idx[dst] = i;
                values[dst] = self.values[k];
                next[j] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Linear combination `sum_k coeff_k * A_k` over matrices of equal shape.
    pub fn lin_comb(terms: &[(f64, &SparseMatrix)]) -> Result<SparseMatrix> {
        let (nrows, ncols) = match terms.first() {
            Some((_, a)) => (a.nrows, a.ncols),
            None => return Err(Error::invalid("lin_comb of no matrices")),
        };
        for (_, a) in terms {
            if a.nrows != nrows || a.ncols != ncols {
                return Err(Error::invalid("lin_comb shape mismatch"));
            }
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0usize);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut dense = vec![0.0f64; ncols];
        let mut marked = vec![false; ncols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..nrows {
            for (c, a) in terms {
                let (cols, vals) = a.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    if !marked[j] {
                        marked[j] = true;
                        touched.push(j);
                        dense[j] = 0.0;
                    }
                    dense[j] += c * v;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                values.push(dense[j]);
                marked[j] = false;
            }
            touched.clear();
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Dense copy for small oracles and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[i][j] = v;
            }
        }
        d
    }

    /// max_ij |A_ij - A_ji|, a symmetry defect measure.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                defect = defect.max((v - self.get(j, i)).abs());
            }
        }
        defect
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Row sums as a vector (for mass functionals).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }
}

/// Euclidean dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solves A x = b through sparse LU with partial pivoting. The residual
/// contract matches the iterative solvers: relative residual <= tol, else
/// an explicit failure carrying the report.
pub fn solve_general(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    _max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("solve_general needs a square matrix"));
    }
    if b.len() != a.nrows() {
        return Err(Error::invalid("solve_general rhs length mismatch"));
    }
    let lu = SparseLu::factorize(a)?;
    let x = lu.solve(b);
    let mut r = b.to_vec();
    a.spmv_acc(-1.0, &x, &mut r);
    let bn = norm2(b);
    let rn = norm2(&r);
    let rel = if bn > 0.0 { rn / bn } else { rn };
    let report = SolveReport {
        iterations: 0,
        residual: rel,
        converged: rel <= tol,
    };
    if !report.converged {
        return Err(Error::solve_failure("sparse LU residual check", &report));
    }
    Ok((x, report))
}
