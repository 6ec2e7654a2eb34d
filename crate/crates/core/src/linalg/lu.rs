//! Sparse LU factorization with partial pivoting (left-looking,
//! Gilbert-Peierls). Backs the nonsymmetric density solve where the noise
//! increment enters the system matrix, so the factorization cannot be
//! reused across steps.

use super::SparseMatrix;
use crate::error::{Error, Result};

pub struct SparseLu {
    n: usize,
    /// L columns: (original row, value), unit diagonal implicit.
    l_cols: Vec<Vec<(usize, f64)>>,
    /// U columns: (pivot position < j, value); diagonal kept separately.
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    /// position -> original row picked as pivot
    perm_rows: Vec<usize>,
}

impl SparseLu {
    pub fn factorize(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("LU needs a square matrix"));
        }
        let n = a.nrows();
        let acsc = a.transpose(); // rows of the transpose are columns of A
        let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut u_diag = vec![0.0; n];
        let mut perm_rows = vec![usize::MAX; n];
        // original row -> pivot position, MAX while not yet pivotal
        let mut pinv = vec![usize::MAX; n];

        let mut x = vec![0.0f64; n];
        let mut visited = vec![false; n];
        let mut topo: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for j in 0..n {
            // symbolic: reach of A(:,j) through the pivotal columns of L
            topo.clear();
            let (col_rows, col_vals) = acsc.row(j);
            for &i in col_rows {
                if !visited[i] {
                    dfs_reach(i, &pinv, &l_cols, &mut visited, &mut topo, &mut stack);
                }
            }
            // numeric: scatter A(:,j), then eliminate in topological order
            for (&i, &v) in col_rows.iter().zip(col_vals) {
                x[i] = v;
            }
            for &i in topo.iter().rev() {
                let k = pinv[i];
                if k == usize::MAX {
                    continue;
                }
                let xi = x[i];
                if xi != 0.0 {
                    for &(r, lv) in &l_cols[k] {
                        x[r] -= lv * xi;
                    }
                }
            }
            // partial pivot among rows that are not pivotal yet
            let mut pivot_row = usize::MAX;
            let mut pivot_abs = 0.0f64;
            for &i in topo.iter() {
                if pinv[i] == usize::MAX {
                    let a = x[i].abs();
                    if a > pivot_abs || (a == pivot_abs && a > 0.0 && i < pivot_row) {
                        pivot_abs = a;
                        pivot_row = i;
                    }
                }
            }
            if pivot_row == usize::MAX || pivot_abs == 0.0 || !pivot_abs.is_finite() {
                // clean scratch before bailing out
                for &i in &topo {
                    x[i] = 0.0;
                    visited[i] = false;
                }
                return Err(Error::SingularMatrix(format!(
                    "no usable pivot in column {j}"
                )));
            }
            let pivot = x[pivot_row];
            let mut ucol = Vec::new();
            let mut lcol = Vec::new();
            for &i in &topo {
                let v = x[i];
                let k = pinv[i];
                if i == pivot_row {
                    // diagonal
                } else if k != usize::MAX {
                    if v != 0.0 {
                        ucol.push((k, v));
                    }
                } else if v != 0.0 {
                    lcol.push((i, v / pivot));
                }
                x[i] = 0.0;
                visited[i] = false;
            }
            ucol.sort_unstable_by_key(|e| e.0);
            lcol.sort_unstable_by_key(|e| e.0);
            u_diag[j] = pivot;
            pinv[pivot_row] = j;
            perm_rows[j] = pivot_row;
            u_cols.push(ucol);
            l_cols.push(lcol);
        }
        Ok(SparseLu {
            n,
            l_cols,
            u_cols,
            u_diag,
            perm_rows,
        })
    }

    /// Solves A x = b with the stored factors.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        // forward: L y = P b, working over original row indices
        let mut z = b.to_vec();
        for k in 0..self.n {
            let zk = z[self.perm_rows[k]];
            if zk != 0.0 {
                for &(r, lv) in &self.l_cols[k] {
                    z[r] -= lv * zk;
                }
            }
        }
        let mut y: Vec<f64> = (0..self.n).map(|k| z[self.perm_rows[k]]).collect();
        // backward: U x = y over pivot positions
        let mut xsol = vec![0.0; self.n];
        for j in (0..self.n).rev() {
            let xv = y[j] / self.u_diag[j];
            xsol[j] = xv;
            if xv != 0.0 {
                for &(k, uv) in &self.u_cols[j] {
                    y[k] -= uv * xv;
                }
            }
        }
        xsol
    }
}

/// Iterative DFS from original row `start` through pivotal L columns,
/// appending rows in post-order (so reverse iteration is topological).
fn dfs_reach(
    start: usize,
    pinv: &[usize],
    l_cols: &[Vec<(usize, f64)>],
    visited: &mut [bool],
    topo: &mut Vec<usize>,
    stack: &mut Vec<(usize, usize)>,
) {
    stack.push((start, 0));
    visited[start] = true;
    while let Some(&mut (i, ref mut next)) = stack.last_mut() {
        let k = pinv[i];
        let children: &[(usize, f64)] = if k == usize::MAX { &[] } else { &l_cols[k] };
        if *next < children.len() {
            let child = children[*next].0;
            *next += 1;
            if !visited[child] {
                visited[child] = true;
                stack.push((child, 0));
            }
        } else {
            topo.push(i);
            stack.pop();
        }
    }
}
