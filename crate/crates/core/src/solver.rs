//! Linear solvers for the implicit schemes.
//!
//! SPD systems go through conjugate gradients or, for the narrow-band
//! matrices coming from 1D discretizations, a direct banded Cholesky
//! factorization. General (mass plus skew perturbation) systems go through
//! restarted GMRES. Every accepted solution satisfies
//! `||A x - b|| <= tol * ||b||`, re-checked on the true residual.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Banded Cholesky for narrow-band systems (1D discretizations),
    /// conjugate gradients otherwise.
    Auto,
    /// Conjugate gradients (SPD systems).
    Cg,
    /// Restarted GMRES (general nonsingular systems).
    Gmres,
    /// Banded Cholesky, unconditionally.
    DirectBanded,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iterations: usize,
    pub method: Method,
    pub gmres_restart: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            max_iterations: 200_000,
            method: Method::Auto,
            gmres_restart: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::invalid_argument("solver tolerance must be in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid_argument("max iterations must be >= 1"));
        }
        if self.gmres_restart == 0 {
            return Err(Error::invalid_argument("GMRES restart must be >= 1"));
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub stats: SolverStats,
}

/// Semi-bandwidth at or below which SPD solves use the direct factorization.
const AUTO_BAND_LIMIT: usize = 16;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn residual_norm(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let mut r = 0.0;
    for i in 0..b.len() {
        let d = b[i] - ax[i];
        r += d * d;
    }
    r.sqrt()
}

/// Solve A x = b for symmetric positive definite A.
///
/// Symmetry is checked up front (entrywise to 1e-13 relative to the largest
/// entry); positive definiteness surfaces as a factorization or CG breakdown.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    if a.rows() != a.cols() || a.rows() != b.len() {
        return Err(Error::invalid_argument("solve_spd: shape mismatch"));
    }
    let scale = a
        .diagonal()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    match a.asymmetry() {
        Some(asym) if asym <= 1e-13 * scale => {}
        Some(asym) => {
            return Err(Error::invalid_argument(format!(
                "solve_spd: matrix is not symmetric (max |A - A^T| = {asym:.3e})"
            )))
        }
        None => return Err(Error::invalid_argument("solve_spd: matrix not square")),
    }
    let method = match cfg.method {
        Method::Auto => {
            if a.bandwidth() <= AUTO_BAND_LIMIT {
                Method::DirectBanded
            } else {
                Method::Cg
            }
        }
        chosen => chosen,
    };
    match method {
        Method::Auto => unreachable!("resolved above"),
        Method::DirectBanded => {
            let chol = BandedCholesky::factor(a)?;
            let x = chol.solve(b);
            let res = residual_norm(a, &x, b);
            let bnorm = norm(b).max(f64::MIN_POSITIVE);
            if res > cfg.tol.max(1e-10) * bnorm && res > 1e-13 * scale {
                return Err(Error::SolverFailure {
                    what: "banded Cholesky".into(),
                    residual: res,
                    iterations: 1,
                });
            }
            Ok(Solution {
                x,
                stats: SolverStats {
                    iterations: 1,
                    residual: res,
                },
            })
        }
        Method::Gmres => solve_general(a, b, cfg),
        Method::Cg => conjugate_gradient(a, b, cfg),
    }
}

fn conjugate_gradient(a: &CsrMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            stats: SolverStats::default(),
        });
    }
    let target = cfg.tol * bnorm;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rsq = dot(&r, &r);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if rsq.sqrt() <= target {
            break;
        }
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolverFailure {
                what: "CG (matrix not positive definite)".into(),
                residual: rsq.sqrt(),
                iterations,
            });
        }
        let alpha = rsq / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rsq_new = dot(&r, &r);
        let beta = rsq_new / rsq;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rsq = rsq_new;
        iterations += 1;
    }
    let res = residual_norm(a, &x, b);
    if res > target * 1.001 {
        return Err(Error::SolverFailure {
            what: "CG".into(),
            residual: res,
            iterations,
        });
    }
    Ok(Solution {
        x,
        stats: SolverStats {
            iterations,
            residual: res,
        },
    })
}

/// Solve A x = b for a general nonsingular matrix via restarted GMRES with
/// modified Gram-Schmidt and Givens rotations.
pub fn solve_general(a: &CsrMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    if a.rows() != a.cols() || a.rows() != b.len() {
        return Err(Error::invalid_argument("solve_general: shape mismatch"));
    }
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            stats: SolverStats::default(),
        });
    }
    let target = cfg.tol * bnorm;
    let m = cfg.gmres_restart.min(n.max(1));
    let mut x = vec![0.0; n];
    let mut total_iters = 0usize;
    let mut last_cycle_res = f64::INFINITY;

    while total_iters < cfg.max_iterations {
        let ax = a.matvec(&x);
        let mut r0 = vec![0.0; n];
        for i in 0..n {
            r0[i] = b[i] - ax[i];
        }
        let beta = norm(&r0);
        if beta <= target {
            break;
        }
        // stagnation across restart cycles
        if beta > 0.9999 * last_cycle_res && total_iters > 0 {
            return Err(Error::SolverFailure {
                what: "GMRES (stagnation)".into(),
                residual: beta,
                iterations: total_iters,
            });
        }
        last_cycle_res = beta;

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r0.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            if total_iters >= cfg.max_iterations {
                break;
            }
            total_iters += 1;
            let mut w = a.matvec(&basis[k]);
            // modified Gram-Schmidt with one reorthogonalization pass
            for j in 0..=k {
                let hjk = dot(&w, &basis[j]);
                h[j][k] = hjk;
                axpy(-hjk, &basis[j], &mut w);
            }
            for j in 0..=k {
                let corr = dot(&w, &basis[j]);
                h[j][k] += corr;
                axpy(-corr, &basis[j], &mut w);
            }
            let wnorm = norm(&w);
            h[k + 1][k] = wnorm;

            // apply previous Givens rotations to the new column
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                return Err(Error::SolverFailure {
                    what: "GMRES (breakdown, singular matrix)".into(),
                    residual: g[k].abs(),
                    iterations: total_iters,
                });
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;

            let res = g[k + 1].abs();
            if res <= target || wnorm <= 1e-300 {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }

        // back substitution on the triangular system
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut sum = g[i];
            for j in (i + 1)..k_used {
                sum -= h[i][j] * y[j];
            }
            y[i] = sum / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &basis[j], &mut x);
        }
    }

    let res = residual_norm(a, &x, b);
    if res > target * 1.001 {
        return Err(Error::SolverFailure {
            what: "GMRES".into(),
            residual: res,
            iterations: total_iters,
        });
    }
    Ok(Solution {
        x,
        stats: SolverStats {
            iterations: total_iters,
            residual: res,
        },
    })
}

/// Largest generalized eigenvalue of K x = lambda M x (K symmetric positive
/// semidefinite, M symmetric positive definite), by power iteration on
/// M^{-1} K with a Rayleigh-quotient estimate.
///
/// Convergence is declared when the M^{-1}-weighted residual bound
/// sqrt(z^T M z / x^T M x) with z = M^{-1} K x - lambda x drops below
/// `tol * lambda`, which for symmetric pencils bounds the eigenvalue error.
pub fn power_iteration_genevp(k: &CsrMatrix, m: &CsrMatrix, tol: f64) -> Result<f64> {
    if k.rows() != k.cols() || m.rows() != m.cols() || k.rows() != m.rows() {
        return Err(Error::invalid_argument("eigensolver: shape mismatch"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::invalid_argument("eigensolver tolerance must be in (0, 1)"));
    }
    let n = k.rows();
    let inner = SolverConfig {
        tol: (tol * 1e-2).clamp(1e-13, 1e-6),
        ..SolverConfig::default()
    };
    // deterministic start with energy in every coordinate direction
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.37 * ((i * 2_654_435_761 % 97) as f64 / 97.0))
        .collect();
    let xnorm = norm(&x);
    for v in &mut x {
        *v /= xnorm;
    }
    let max_outer = 500_000usize;
    let mut lambda = 0.0f64;
    for it in 0..max_outer {
        let kx = k.matvec(&x);
        let y = solve_spd(m, &kx, &inner)?.x;
        let xtkx = dot(&x, &kx);
        let mx = m.matvec(&x);
        let xtmx = dot(&x, &mx);
        lambda = xtkx / xtmx;
        // residual bound in the M inner product
        let mut z = y.clone();
        axpy(-lambda, &x, &mut z);
        let mz = m.matvec(&z);
        let bound = (dot(&z, &mz).max(0.0) / xtmx).sqrt();
        if bound <= tol * lambda.abs().max(f64::MIN_POSITIVE) && it > 0 {
            return Ok(lambda);
        }
        let ynorm = norm(&y);
        if ynorm == 0.0 {
            // K x lies in the kernel; for PSD K this means lambda_max = 0
            return Ok(0.0);
        }
        x = y.iter().map(|v| v / ynorm).collect();
    }
    Err(Error::SolverFailure {
        what: "power iteration".into(),
        residual: lambda,
        iterations: max_outer,
    })
}

/// Symmetric banded Cholesky factorization A = L L^T stored by diagonals.
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// band[d][i] = L(i, i - d) for d = 0..=bw
    band: Vec<Vec<f64>>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.rows();
        let bw = a.bandwidth();
        let mut band = vec![vec![0.0f64; n]; bw + 1];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c <= r {
                    band[r - c][r] = v;
                }
            }
        }
        // in-place banded Cholesky
        for j in 0..n {
            let mut diag = band[0][j];
            let start = j.saturating_sub(bw);
            for k in start..j {
                let l = band[j - k][j];
                diag -= l * l;
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(Error::SolverFailure {
                    what: "banded Cholesky (matrix not positive definite)".into(),
                    residual: diag,
                    iterations: j,
                });
            }
            let dj = diag.sqrt();
            band[0][j] = dj;
            let end = (j + bw).min(n - 1);
            for i in (j + 1)..=end {
                let mut v = band[i - j][i];
                let start_i = i.saturating_sub(bw);
                for k in start_i.max(start)..j {
                    v -= band[i - k][i] * band[j - k][j];
                }
                band[i - j][i] = v / dj;
            }
        }
        Ok(BandedCholesky { n, bw, band })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bw = self.bw;
        let mut y = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let mut v = y[i];
            for k in start..i {
                v -= self.band[i - k][i] * y[k];
            }
            y[i] = v / self.band[0][i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let end = (i + bw).min(n - 1);
            let mut v = y[i];
            for k in (i + 1)..=end {
                v -= self.band[k - i][k] * y[k];
            }
            y[i] = v / self.band[0][i];
        }
        y
    }
}
