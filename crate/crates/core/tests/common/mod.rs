//! Dense linear-algebra oracles for the acceptance suite, independent of the
//! sparse implementation paths they check.

use wavelab::sparse::CsrMatrix;

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            if ail != 0.0 {
                for j in 0..m {
                    c[i][j] += ail * b[l][j];
                }
            }
        }
    }
    c
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| aug[p][col].abs().total_cmp(&aug[q][col].abs()))
            .unwrap();
        assert!(aug[pivot][col].abs() > 1e-300, "singular matrix in oracle");
        aug.swap(col, pivot);
        let d = aug[col][col];
        for v in &mut aug[col] {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        let s = f * aug[col][j];
                        aug[r][j] -= s;
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..200 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[i][j].abs());
            }
        }
        let scale = (0..n).map(|i| a[i][i].abs()).fold(1e-300, f64::max);
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-18 * scale {
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
    (0..n).map(|i| a[i][i]).collect()
}

/// Lower Cholesky factor of a dense SPD matrix.
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
                assert!(sum > 0.0, "matrix not positive definite in oracle");
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    l
}

/// Largest eigenvalue of the symmetric pencil K x = lambda M x via a dense
/// Cholesky reduction to a standard problem plus Jacobi iteration.
pub fn generalized_eig_max(k: &CsrMatrix, m: &CsrMatrix) -> f64 {
    let kd = k.to_dense();
    let md = m.to_dense();
    let n = kd.len();
    let l = cholesky(&md);
    // B = L^{-1} K L^{-T}: forward solves column by column
    // first X = L^{-1} K
    let mut x = kd;
    for col in 0..n {
        for i in 0..n {
            let mut v = x[i][col];
            for kk in 0..i {
                v -= l[i][kk] * x[kk][col];
            }
            x[i][col] = v / l[i][i];
        }
    }
    // then B = X L^{-T}: B^T = L^{-1} X^T, i.e. forward solve on rows
    let mut b = vec![vec![0.0; n]; n];
    for row in 0..n {
        for j in 0..n {
            let mut v = x[row][j];
            for kk in 0..j {
                v -= l[j][kk] * b[row][kk];
            }
            b[row][j] = v / l[j][j];
        }
    }
    symmetric_eigenvalues(b)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}
