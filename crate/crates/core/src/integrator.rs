//! Time integration kernels: the Newmark family, the staggered
//! Stormer-Verlet (leapfrog) update, the implicit midpoint rule, the reduced
//! three-term recurrences, and primal-variable reconstruction.
//!
//! States are bags of named vectors, each carrying a time stamp (integer step
//! or half step). Staggered schemes keep the velocity-like variable at half
//! steps; collocated schemes keep everything at integer steps. Steppers
//! validate the stamps they need and return `invalid-state` otherwise.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::solver::{self, solve_general, solve_spd, SolverConfig};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub enum FieldName {
    Q,
    V,
    /// Trailing half-step velocity (one step behind `V`) kept by staggered
    /// schemes for the conserved two-time energy product.
    VPrev,
    A,
    Sigma,
}

impl FieldName {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldName::Q => "q",
            FieldName::V => "v",
            FieldName::VPrev => "v_prev",
            FieldName::A => "a",
            FieldName::Sigma => "sigma",
        }
    }
}

/// Time stamp of a stored vector: `Integer(n)` is time n*dt, `Half(n)` is
/// time (n + 1/2)*dt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stamp {
    Integer(i64),
    Half(i64),
}

#[derive(Debug, Clone)]
pub struct Stamped {
    pub stamp: Stamp,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SchemeState {
    pub step: usize,
    fields: BTreeMap<FieldName, Stamped>,
}

impl SchemeState {
    pub fn new(step: usize) -> Self {
        SchemeState {
            step,
            fields: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: FieldName, stamp: Stamp, data: Vec<f64>) {
        self.fields.insert(name, Stamped { stamp, data });
    }

    pub fn get(&self, name: FieldName) -> Result<&Stamped> {
        self.fields
            .get(&name)
            .ok_or_else(|| Error::invalid_state(format!("state has no field {}", name.as_str())))
    }

    pub fn try_get(&self, name: FieldName) -> Option<&Stamped> {
        self.fields.get(&name)
    }

    /// Field data, checked against the expected stamp.
    pub fn expect(&self, name: FieldName, stamp: Stamp) -> Result<&[f64]> {
        let f = self.get(name)?;
        if f.stamp != stamp {
            return Err(Error::invalid_state(format!(
                "field {} has stamp {:?}, expected {:?}",
                name.as_str(),
                f.stamp,
                stamp
            )));
        }
        Ok(&f.data)
    }

    pub fn fields(&self) -> impl Iterator<Item = (FieldName, &Stamped)> {
        self.fields.iter().map(|(k, v)| (*k, v))
    }

    /// Multiply every stored vector by a scalar.
    pub fn scaled(&self, alpha: f64) -> SchemeState {
        let mut out = self.clone();
        for f in out.fields.values_mut() {
            for v in &mut f.data {
                *v *= alpha;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Scheme {
    Newmark,
    Leapfrog,
    StormerVerlet,
    ImplicitMidpoint,
}

impl Scheme {
    pub fn is_staggered(&self) -> bool {
        matches!(self, Scheme::Leapfrog | Scheme::StormerVerlet)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconstruction {
    None,
    /// q^{n+1} = q^n + dt * v^{n+1/2} (staggered schemes).
    HalfStep,
    /// q^{n+1} = q^n + dt/2 * (v^n + v^{n+1}) (collocated schemes).
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MidpointPath {
    /// Eliminate the partner variable and solve one SPD system.
    Schur,
    /// Solve the coupled block system (mass plus skew perturbation) with GMRES.
    Monolithic,
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub gamma: f64,
    pub beta: f64,
    pub scheme: Scheme,
    pub steps: usize,
    pub reconstruction: Reconstruction,
    pub midpoint_path: MidpointPath,
    pub solver: SolverConfig,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64, steps: usize) -> Self {
        let (gamma, beta) = match scheme {
            Scheme::Newmark => (0.5, 0.25),
            Scheme::Leapfrog | Scheme::StormerVerlet => (0.5, 0.0),
            Scheme::ImplicitMidpoint => (0.5, 0.25),
        };
        let reconstruction = match scheme {
            Scheme::Leapfrog | Scheme::StormerVerlet => Reconstruction::HalfStep,
            Scheme::ImplicitMidpoint => Reconstruction::Trapezoidal,
            Scheme::Newmark => Reconstruction::None,
        };
        IntegratorConfig {
            dt,
            gamma,
            beta,
            scheme,
            steps,
            reconstruction,
            midpoint_path: MidpointPath::Schur,
            solver: SolverConfig::default(),
        }
    }

    pub fn with_newmark_params(mut self, gamma: f64, beta: f64) -> Self {
        self.gamma = gamma;
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid_argument("dt must be positive and finite"));
        }
        self.solver.validate()?;
        match self.scheme {
            Scheme::Leapfrog | Scheme::StormerVerlet => {
                if self.gamma != 0.5 || self.beta != 0.0 {
                    return Err(Error::invalid_argument(
                        "leapfrog requires (gamma, beta) = (1/2, 0)",
                    ));
                }
            }
            Scheme::ImplicitMidpoint => {
                if self.gamma != 0.5 || self.beta != 0.25 {
                    return Err(Error::invalid_argument(
                        "implicit midpoint requires (gamma, beta) = (1/2, 1/4)",
                    ));
                }
            }
            Scheme::Newmark => {}
        }
        Ok(())
    }
}

/// One Newmark step for M qdd = -K q.
///
/// Given (q^n, v^n, a^n):
///   q^{n+1} = q^n + dt v^n + dt^2 (beta a^{n+1} + (1/2 - beta) a^n)
///   M a^{n+1} = -K q^{n+1}
///   v^{n+1} = v^n + dt (gamma a^{n+1} + (1 - gamma) a^n)
/// The implicit system (M + beta dt^2 K) is solved for the new acceleration.
pub fn newmark_step(
    m: &CsrMatrix,
    k: &CsrMatrix,
    state: &SchemeState,
    cfg: &IntegratorConfig,
) -> Result<SchemeState> {
    cfg.validate()?;
    let n = state.step as i64;
    let q = state.expect(FieldName::Q, Stamp::Integer(n))?;
    let v = state.expect(FieldName::V, Stamp::Integer(n))?;
    let a = state.expect(FieldName::A, Stamp::Integer(n))?;
    let dt = cfg.dt;

    // predictor: q^n + dt v^n + dt^2 (1/2 - beta) a^n
    let mut q_pred = q.to_vec();
    solver::axpy(dt, v, &mut q_pred);
    solver::axpy(dt * dt * (0.5 - cfg.beta), a, &mut q_pred);

    let lhs = if cfg.beta == 0.0 {
        m.clone()
    } else {
        CsrMatrix::linear_combination(1.0, m, cfg.beta * dt * dt, k)
    };
    let rhs: Vec<f64> = k.matvec(&q_pred).iter().map(|x| -x).collect();
    let a_new = solve_spd(&lhs, &rhs, &cfg.solver)?.x;

    let mut q_new = q_pred;
    solver::axpy(dt * dt * cfg.beta, &a_new, &mut q_new);
    let mut v_new = v.to_vec();
    solver::axpy(dt * cfg.gamma, &a_new, &mut v_new);
    solver::axpy(dt * (1.0 - cfg.gamma), a, &mut v_new);

    let mut out = SchemeState::new(state.step + 1);
    out.insert(FieldName::Q, Stamp::Integer(n + 1), q_new);
    out.insert(FieldName::V, Stamp::Integer(n + 1), v_new);
    out.insert(FieldName::A, Stamp::Integer(n + 1), a_new);
    Ok(out)
}

/// The two coupled blocks of a first-order system
///   M_y dy/dt = off_yz * z,
///   M_z dz/dt = off_zy * y.
///
/// `m_z_inv` is the exact inverse of `m_z` (the identity, or a
/// block-diagonal discontinuous-space mass inverse); the midpoint Schur
/// reduction eliminates z through it.
pub struct SkewPair<'a> {
    pub m_y: &'a CsrMatrix,
    pub off_yz: &'a CsrMatrix,
    pub m_z: &'a CsrMatrix,
    pub off_zy: &'a CsrMatrix,
    pub m_z_inv: &'a CsrMatrix,
    pub y: FieldName,
    pub z: FieldName,
}

/// One staggered Stormer-Verlet step: drift z with the stored half-step y,
/// then kick y with the fresh z.
///
///   M_z (z^{n+1} - z^n) = dt * off_zy * y^{n+1/2}
///   M_y (y^{n+3/2} - y^{n+1/2}) = dt * off_yz * z^{n+1}
pub fn stormer_verlet_step(
    pair: &SkewPair,
    state: &SchemeState,
    cfg: &IntegratorConfig,
) -> Result<SchemeState> {
    cfg.validate()?;
    if !cfg.scheme.is_staggered() {
        return Err(Error::invalid_state(
            "Stormer-Verlet stepping needs a staggered scheme tag",
        ));
    }
    let n = state.step as i64;
    let y = state.expect(pair.y, Stamp::Half(n))?;
    let z = state.expect(pair.z, Stamp::Integer(n))?;
    let dt = cfg.dt;

    // drift: M_z (z' - z) = dt off_zy y
    let rhs_z = pair.off_zy.matvec(y);
    let dz = solve_spd(pair.m_z, &rhs_z, &cfg.solver)?.x;
    let mut z_new = z.to_vec();
    solver::axpy(dt, &dz, &mut z_new);

    // kick: M_y (y' - y) = dt off_yz z'
    let rhs = pair.off_yz.matvec(&z_new);
    let dy = solve_spd(pair.m_y, &rhs, &cfg.solver)?.x;
    let mut y_new = y.to_vec();
    solver::axpy(dt, &dy, &mut y_new);

    let mut out = SchemeState::new(state.step + 1);
    out.insert(pair.z, Stamp::Integer(n + 1), z_new);
    out.insert(pair.y, Stamp::Half(n + 1), y_new);
    out.insert(FieldName::VPrev, Stamp::Half(n), y.to_vec());
    Ok(out)
}

/// Blocks of the three-field system (v, q, sigma) with the algebraic
/// constraint M_sigma sigma = -D^T q.
pub struct ThreeFieldBlocks<'a> {
    pub m_v: &'a CsrMatrix,
    pub m_sigma: &'a CsrMatrix,
    /// D(i, e) = int psi_i div(xi_e), mapping sigma coefficients into the
    /// velocity test space.
    pub coupling_div: &'a CsrMatrix,
    pub m_v_inv: &'a CsrMatrix,
}

/// Staggered step of the three-field form: drift q, re-solve the constraint
/// for sigma, kick v.
///
///   q^{n+1} = q^n + dt v^{n+1/2}          (both live in W, the mass cancels)
///   M_sigma sigma^{n+1} = -D^T q^{n+1}
///   M_v (v^{n+3/2} - v^{n+1/2}) = dt D sigma^{n+1}
pub fn three_field_sv_step(
    blocks: &ThreeFieldBlocks,
    state: &SchemeState,
    cfg: &IntegratorConfig,
) -> Result<SchemeState> {
    cfg.validate()?;
    if !cfg.scheme.is_staggered() {
        return Err(Error::invalid_state(
            "Stormer-Verlet stepping needs a staggered scheme tag",
        ));
    }
    let n = state.step as i64;
    let v = state.expect(FieldName::V, Stamp::Half(n))?;
    let q = state.expect(FieldName::Q, Stamp::Integer(n))?;
    let dt = cfg.dt;

    let mut q_new = q.to_vec();
    solver::axpy(dt, v, &mut q_new);

    let rhs_sigma: Vec<f64> = blocks
        .coupling_div
        .matvec_transpose(&q_new)
        .iter()
        .map(|x| -x)
        .collect();
    let sigma_new = solve_spd(blocks.m_sigma, &rhs_sigma, &cfg.solver)?.x;

    let rhs_v = blocks.coupling_div.matvec(&sigma_new);
    let dv = solve_spd(blocks.m_v, &rhs_v, &cfg.solver)?.x;
    let mut v_new = v.to_vec();
    solver::axpy(dt, &dv, &mut v_new);

    let mut out = SchemeState::new(state.step + 1);
    out.insert(FieldName::Q, Stamp::Integer(n + 1), q_new);
    out.insert(FieldName::Sigma, Stamp::Integer(n + 1), sigma_new);
    out.insert(FieldName::V, Stamp::Half(n + 1), v_new);
    out.insert(FieldName::VPrev, Stamp::Half(n), v.to_vec());
    Ok(out)
}

/// Implicit midpoint step of the three-field form, with the constraint
/// enforced at the step average. Eliminating v and q leaves one SPD solve
///   (M_sigma + dt^2/4 D^T M_v^{-1} D) sigma_mid = -D^T q^n - dt/2 D^T v^n.
pub fn three_field_midpoint_step(
    blocks: &ThreeFieldBlocks,
    state: &SchemeState,
    cfg: &IntegratorConfig,
) -> Result<SchemeState> {
    cfg.validate()?;
    let n = state.step as i64;
    let v = state.expect(FieldName::V, Stamp::Integer(n))?;
    let q = state.expect(FieldName::Q, Stamp::Integer(n))?;
    let sigma = state.expect(FieldName::Sigma, Stamp::Integer(n))?;
    let dt = cfg.dt;
    let d = blocks.coupling_div;

    let s = d.transpose().matmul(&blocks.m_v_inv.matmul(d));
    let lhs = CsrMatrix::linear_combination(1.0, blocks.m_sigma, dt * dt / 4.0, &s);
    let dq = d.matvec_transpose(q);
    let dv = d.matvec_transpose(v);
    let rhs: Vec<f64> = dq
        .iter()
        .zip(&dv)
        .map(|(a, b)| -a - dt / 2.0 * b)
        .collect();
    let sigma_mid = solve_spd(&lhs, &rhs, &cfg.solver)?.x;

    let mut v_new = v.to_vec();
    let kick = blocks.m_v_inv.matvec(&d.matvec(&sigma_mid));
    solver::axpy(dt, &kick, &mut v_new);

    let mut q_new = q.to_vec();
    solver::axpy(dt / 2.0, v, &mut q_new);
    solver::axpy(dt / 2.0, &v_new, &mut q_new);

    let sigma_new: Vec<f64> = sigma_mid
        .iter()
        .zip(sigma)
        .map(|(mid, old)| 2.0 * mid - old)
        .collect();

    let mut out = SchemeState::new(state.step + 1);
    out.insert(FieldName::V, Stamp::Integer(n + 1), v_new);
    out.insert(FieldName::Q, Stamp::Integer(n + 1), q_new);
    out.insert(FieldName::Sigma, Stamp::Integer(n + 1), sigma_new);
    Ok(out)
}

/// One implicit midpoint step on the coupled pair, with both unknowns at
/// integer steps and right-hand sides evaluated at the step average.
///
/// The Schur path eliminates z and solves one SPD system
///   (M_y - dt^2/4 off_yz M_z^{-1} off_zy) y^{n+1} = ...
/// The monolithic path solves the full block system (positive definite mass
/// perturbed by a skew coupling) with GMRES. Both must agree to solver
/// tolerance.
pub fn midpoint_step(
    pair: &SkewPair,
    state: &SchemeState,
    cfg: &IntegratorConfig,
) -> Result<SchemeState> {
    cfg.validate()?;
    let n = state.step as i64;
    let y = state.expect(pair.y, Stamp::Integer(n))?;
    let z = state.expect(pair.z, Stamp::Integer(n))?;
    let dt = cfg.dt;

    let (y_new, z_new) = match cfg.midpoint_path {
        MidpointPath::Schur => {
            // S = off_yz M_z^{-1} off_zy (negative semidefinite for skew pairs)
            let s = pair.off_yz.matmul(&pair.m_z_inv.matmul(pair.off_zy));
            let lhs = CsrMatrix::linear_combination(1.0, pair.m_y, -dt * dt / 4.0, &s);
            let rhs_m = CsrMatrix::linear_combination(1.0, pair.m_y, dt * dt / 4.0, &s);
            let mut rhs = rhs_m.matvec(y);
            solver::axpy(dt, &pair.off_yz.matvec(z), &mut rhs);
            let y_new = solve_spd(&lhs, &rhs, &cfg.solver)?.x;
            // z' = z + dt M_z^{-1} off_zy (y + y')/2
            let mut y_mid = y.to_vec();
            solver::axpy(1.0, &y_new, &mut y_mid);
            for v in &mut y_mid {
                *v *= 0.5;
            }
            let mut z_new = z.to_vec();
            let dz = pair.m_z_inv.matvec(&pair.off_zy.matvec(&y_mid));
            solver::axpy(dt, &dz, &mut z_new);
            (y_new, z_new)
        }
        MidpointPath::Monolithic => {
            let ny = y.len();
            let nz = z.len();
            let block = CsrMatrix::block_2x2(
                Some((1.0, pair.m_y)),
                Some((-dt / 2.0, pair.off_yz)),
                Some((-dt / 2.0, pair.off_zy)),
                Some((1.0, pair.m_z)),
                ny,
                ny,
                ny + nz,
                ny + nz,
            );
            let mut rhs = vec![0.0; ny + nz];
            let my_y = pair.m_y.matvec(y);
            let a_z = pair.off_yz.matvec(z);
            for i in 0..ny {
                rhs[i] = my_y[i] + dt / 2.0 * a_z[i];
            }
            let mz_z = pair.m_z.matvec(z);
            let b_y = pair.off_zy.matvec(y);
            for i in 0..nz {
                rhs[ny + i] = mz_z[i] + dt / 2.0 * b_y[i];
            }
            let sol = solve_general(&block, &rhs, &cfg.solver)?.x;
            (sol[..ny].to_vec(), sol[ny..].to_vec())
        }
    };

    let mut out = SchemeState::new(state.step + 1);
    out.insert(pair.y, Stamp::Integer(n + 1), y_new);
    out.insert(pair.z, Stamp::Integer(n + 1), z_new);
    Ok(out)
}

/// Explicit three-term recurrence M (x^{n+1} - 2 x^n + x^{n-1}) = -dt^2 K x^n.
pub fn second_difference_step(
    m: &CsrMatrix,
    k: &CsrMatrix,
    x_prev: &[f64],
    x_curr: &[f64],
    dt: f64,
    solver_cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let mut rhs = m.matvec(x_curr);
    let m_prev = m.matvec(x_prev);
    let k_curr = k.matvec(x_curr);
    for i in 0..rhs.len() {
        rhs[i] = 2.0 * rhs[i] - m_prev[i] - dt * dt * k_curr[i];
    }
    Ok(solve_spd(m, &rhs, solver_cfg)?.x)
}

/// Hat-averaged implicit recurrence
///   M (x^{n+1} - 2 x^n + x^{n-1}) = -dt^2 K (x^{n+1} + 2 x^n + x^{n-1}) / 4,
/// the reduced form of the midpoint rule on the corresponding mixed system.
pub fn hat_second_difference_step(
    m: &CsrMatrix,
    k: &CsrMatrix,
    x_prev: &[f64],
    x_curr: &[f64],
    dt: f64,
    solver_cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let plus = CsrMatrix::linear_combination(1.0, m, dt * dt / 4.0, k);
    let minus = CsrMatrix::linear_combination(1.0, m, -dt * dt / 4.0, k);
    let mut rhs = minus.matvec(x_curr);
    for v in &mut rhs {
        *v *= 2.0;
    }
    let p_prev = plus.matvec(x_prev);
    for i in 0..rhs.len() {
        rhs[i] -= p_prev[i];
    }
    Ok(solve_spd(&plus, &rhs, solver_cfg)?.x)
}

/// Velocity samples feeding a primal-variable reconstruction step.
pub enum ReconstructionInput<'a> {
    /// Staggered: v^{n+1/2}.
    HalfStep(&'a [f64]),
    /// Collocated: v^n and v^{n+1}.
    Trapezoidal { v_curr: &'a [f64], v_next: &'a [f64] },
}

/// Advance the reconstructed primal variable by one step:
/// half-step form q + dt v^{n+1/2}, or trapezoidal form
/// q + dt/2 (v^n + v^{n+1}). The mode must match the integrator's staggering.
pub fn trapezoidal_reconstruct(
    q_curr: &[f64],
    velocities: ReconstructionInput,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let mut q = q_curr.to_vec();
    match (cfg.reconstruction, velocities) {
        (Reconstruction::HalfStep, ReconstructionInput::HalfStep(v_half)) => {
            solver::axpy(cfg.dt, v_half, &mut q);
            Ok(q)
        }
        (Reconstruction::Trapezoidal, ReconstructionInput::Trapezoidal { v_curr, v_next }) => {
            solver::axpy(cfg.dt / 2.0, v_curr, &mut q);
            solver::axpy(cfg.dt / 2.0, v_next, &mut q);
            Ok(q)
        }
        _ => Err(Error::invalid_state(
            "reconstruction mode does not match the integrator staggering",
        )),
    }
}
