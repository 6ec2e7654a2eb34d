//! Shared helpers for the integration suites: a dense symmetric Jacobi
//! eigensolver used as the generalized-eigenvalue oracle for the
//! Crank-Nicolson amplification checks.

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for sweep in 0..200 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(a[i][j].abs());
            }
        }
        let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0f64, f64::max);
        if off <= 1e-14 * scale.max(1e-300) {
            break;
        }
        assert!(sweep < 199, "jacobi failed to converge");
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    eig
}

/// Dense Cholesky factor (lower triangular) of a symmetric positive
/// definite matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                assert!(sum > 0.0, "matrix not positive definite");
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    l
}

/// Eigenvalues of the symmetric generalized pencil (K, M): transforms to
/// the standard problem L^-1 K L^-T with M = L L^T.
pub fn generalized_eigenvalues(k: &[Vec<f64>], m: &[Vec<f64>]) -> Vec<f64> {
    let n = k.len();
    let l = cholesky(m);
    // w = L^-1 K (forward substitution column by column)
    let mut w = vec![vec![0.0; n]; n];
    for col in 0..n {
        for i in 0..n {
            let mut sum = k[i][col];
            for p in 0..i {
                sum -= l[i][p] * w[p][col];
            }
            w[i][col] = sum / l[i][i];
        }
    }
    // s = W L^-T, i.e. solve s L^T = W row by row
    let mut s = vec![vec![0.0; n]; n];
    for row in 0..n {
        for j in 0..n {
            let mut sum = w[row][j];
            for p in 0..j {
                sum -= s[row][p] * l[j][p];
            }
            s[row][j] = sum / l[j][j];
        }
    }
    jacobi_eigenvalues(s)
}
