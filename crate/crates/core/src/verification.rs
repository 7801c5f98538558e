//! Executable equivalence checks between formulations and their reduced
//! schemes, energy audits, stability scans and convergence studies.
//!
//! An equivalence check runs two discretizations of the same problem with the
//! same time step, maps the states onto shared fields (identity, the
//! derivative image of the primal variable, or a reconstructed primal), and
//! records the per-step discrepancy in mass-weighted norms normalized by the
//! initial energy. Reduced-scheme checks march the literal three-term
//! recurrences as an independent code path seeded from the first two parent
//! states.

use std::sync::Arc;

use crate::assembly::{
    assemble_mass, assemble_stiffness_div, assemble_stiffness_grad, MaterialParams,
};
use crate::error::{Error, Result};
use crate::formulation::{
    build_formulation, DiscreteSystem, FormulationKind, FormulationSpec, InstabilityReport,
    Profile, SystemBlocks, Trace,
};
use crate::integrator::{
    hat_second_difference_step, second_difference_step, FieldName, IntegratorConfig, Scheme,
    SchemeState, Stamp,
};
use crate::quadrature::gauss_legendre;
use crate::solver::{self, power_iteration_genevp, SolverConfig};
use crate::sparse::CsrMatrix;

/// Reduced single-field recurrences derived from the two-field schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ReductionKind {
    /// M (q^{n+1} - 2 q^n + q^{n-1}) = -dt^2 K q^n along a Newmark(1/2, 0) run.
    NewmarkSecondDifference,
    /// Staggered velocity recurrence vs the grad-side mixed leapfrog.
    StaggeredVelocityRecurrence,
    /// Integer-step stress recurrence vs the div-side mixed leapfrog.
    StressLeapfrogRecurrence,
    /// Hat-averaged velocity recurrence vs the grad-side mixed midpoint.
    HatVelocityRecurrence,
    /// Hat-averaged stress recurrence vs the div-side mixed midpoint.
    HatStressRecurrence,
}

impl ReductionKind {
    pub const ALL: [ReductionKind; 5] = [
        ReductionKind::NewmarkSecondDifference,
        ReductionKind::StaggeredVelocityRecurrence,
        ReductionKind::StressLeapfrogRecurrence,
        ReductionKind::HatVelocityRecurrence,
        ReductionKind::HatStressRecurrence,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ReductionKind::NewmarkSecondDifference => "newmark-second-difference",
            ReductionKind::StaggeredVelocityRecurrence => "staggered-velocity-recurrence",
            ReductionKind::StressLeapfrogRecurrence => "stress-leapfrog-recurrence",
            ReductionKind::HatVelocityRecurrence => "hat-velocity-recurrence",
            ReductionKind::HatStressRecurrence => "hat-stress-recurrence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::invalid_argument(format!("unknown reduction '{s}'")))
    }
}

/// Per-step mapped discrepancies; fields not shared by a pair stay None.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StepDiscrepancy {
    pub step: usize,
    pub t: f64,
    pub disc_q: Option<f64>,
    pub disc_v: Option<f64>,
    pub disc_sigma: Option<f64>,
    pub energy_a: f64,
    pub energy_b: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EquivalenceReport {
    pub pair: [String; 2],
    pub integrator: String,
    pub steps: usize,
    pub dt: f64,
    pub tol: f64,
    pub mapping: &'static str,
    pub per_step: Vec<StepDiscrepancy>,
    pub max_discrepancy: f64,
    pub pass: bool,
}

impl EquivalenceReport {
    fn finish(mut self) -> Self {
        let max = self
            .per_step
            .iter()
            .flat_map(|s| [s.disc_q, s.disc_v, s.disc_sigma])
            .flatten()
            .fold(0.0f64, f64::max);
        self.max_discrepancy = max;
        self.pass = max <= self.tol;
        self
    }
}

/// Mass-weighted L2 distance ||a - b||_M.
fn m_norm_diff(m: &CsrMatrix, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    solver::dot(&d, &m.matvec(&d)).max(0.0).sqrt()
}

fn scheme_id(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::Newmark => "newmark",
        Scheme::Leapfrog => "leapfrog",
        Scheme::StormerVerlet => "stormer-verlet",
        Scheme::ImplicitMidpoint => "implicit-midpoint",
    }
}

/// Integrator actually applied to one side: second-order formulations run the
/// Newmark member equivalent to the requested scheme.
fn side_config(kind: FormulationKind, cfg: &IntegratorConfig) -> IntegratorConfig {
    if kind.is_second_order() {
        let (gamma, beta) = match cfg.scheme {
            Scheme::Leapfrog | Scheme::StormerVerlet => (0.5, 0.0),
            Scheme::ImplicitMidpoint | Scheme::Newmark => (0.5, 0.25),
        };
        let mut side = cfg.clone();
        side.scheme = Scheme::Newmark;
        side.gamma = gamma;
        side.beta = beta;
        side
    } else {
        cfg.clone()
    }
}

/// How the states of a pair are mapped onto common fields.
struct PairMapping {
    label: &'static str,
    compare_q: bool,
    compare_v: bool,
    compare_sigma: bool,
}

fn pair_mapping(a: FormulationKind, b: FormulationKind) -> Result<PairMapping> {
    use FormulationKind::*;
    let unordered = |x: FormulationKind, y: FormulationKind| (a == x && b == y) || (a == y && b == x);
    if a == b {
        return Ok(PairMapping {
            label: "identity",
            compare_q: matches!(a, Lagrangian2nd | HamiltonianVQ | ThreeFieldVQS),
            compare_v: true,
            compare_sigma: matches!(a, MixedGradVS | MixedDivVS | ThreeFieldVQS | StressOnly2nd),
        });
    }
    if unordered(HamiltonianVQ, MixedGradVS) || unordered(Lagrangian2nd, MixedGradVS) {
        return Ok(PairMapping {
            label: "derivative-image",
            compare_q: true,
            compare_v: true,
            compare_sigma: true,
        });
    }
    if unordered(Lagrangian2nd, HamiltonianVQ) {
        return Ok(PairMapping {
            label: "identity",
            compare_q: true,
            compare_v: true,
            compare_sigma: false,
        });
    }
    if unordered(MixedDivVS, StressOnly2nd) || unordered(ThreeFieldVQS, StressOnly2nd) {
        return Ok(PairMapping {
            label: "identity",
            compare_q: false,
            compare_v: false,
            compare_sigma: true,
        });
    }
    if unordered(ThreeFieldVQS, MixedDivVS) {
        return Ok(PairMapping {
            label: "trapezoid-reconstruction",
            compare_q: true,
            compare_v: true,
            compare_sigma: true,
        });
    }
    Err(Error::InvalidPair(format!(
        "no comparison mapping between {} and {}",
        a.id(),
        b.id()
    )))
}

/// Physical velocity field of a state, when the comparison stamps align.
fn physical_v(kind: FormulationKind, state: &SchemeState) -> Option<(&[f64], Stamp)> {
    use FormulationKind::*;
    let name = match kind {
        VelocityOnly2nd => FieldName::Q,
        StressOnly2nd => return None,
        _ => FieldName::V,
    };
    state.try_get(name).map(|f| (f.data.as_slice(), f.stamp))
}

fn physical_q(kind: FormulationKind, state: &SchemeState) -> Option<&[f64]> {
    use FormulationKind::*;
    match kind {
        Lagrangian2nd | HamiltonianVQ | ThreeFieldVQS | MixedGradVS | MixedDivVS => {
            state.try_get(FieldName::Q).map(|f| f.data.as_slice())
        }
        _ => None,
    }
}

/// sigma as stored, or (for grad-side kinds) the exact image k grad(q)
/// computed through the mixed partner's blocks.
fn physical_sigma(
    kind: FormulationKind,
    state: &SchemeState,
    image_via: Option<&DiscreteSystem>,
) -> Option<Vec<f64>> {
    use FormulationKind::*;
    match kind {
        MixedGradVS | MixedDivVS | ThreeFieldVQS => {
            state.try_get(FieldName::Sigma).map(|f| f.data.clone())
        }
        StressOnly2nd => state.try_get(FieldName::Q).map(|f| f.data.clone()),
        Lagrangian2nd | HamiltonianVQ => {
            let partner = image_via?;
            let SystemBlocks::GradMixed {
                coupling,
                m_sigma_inv,
                ..
            } = &partner.blocks
            else {
                return None;
            };
            let q = state.try_get(FieldName::Q)?;
            Some(m_sigma_inv.matvec(&coupling.matvec(&q.data)))
        }
        _ => None,
    }
}

/// Run two formulations side by side and report per-step discrepancies of
/// every comparable field.
pub fn check_equivalence(
    sys_a: &DiscreteSystem,
    sys_b: &DiscreteSystem,
    cfg: &IntegratorConfig,
    profile: Profile,
    tol: f64,
) -> Result<EquivalenceReport> {
    if !Arc::ptr_eq(sys_a.mesh(), sys_b.mesh()) {
        return Err(Error::InvalidPair(
            "equivalence checks need both formulations on the same mesh".into(),
        ));
    }
    if sys_a.material != sys_b.material {
        return Err(Error::InvalidPair(
            "equivalence checks need matching material parameters".into(),
        ));
    }
    let mapping = pair_mapping(sys_a.kind, sys_b.kind)?;
    let cfg_a = side_config(sys_a.kind, cfg);
    let cfg_b = side_config(sys_b.kind, cfg);

    // the two trajectories are independent; run them concurrently
    let (trace_a, trace_b) = std::thread::scope(|scope| {
        let ta = scope.spawn(|| sys_a.run(profile, &cfg_a));
        let tb = scope.spawn(|| sys_b.run(profile, &cfg_b));
        (ta.join().expect("run thread"), tb.join().expect("run thread"))
    });
    let trace_a = trace_a?;
    let trace_b = trace_b?;

    // comparison norms: unit-coefficient mass matrices of the shared spaces
    let mass_q = match (mapping.compare_q, &sys_a.space_q, &sys_b.space_q) {
        (true, Some(qa), Some(_)) => Some(assemble_mass(qa, 1.0)?),
        _ => None,
    };
    let mass_v = if mapping.compare_v {
        Some(assemble_mass(&sys_a.space_v, 1.0)?)
    } else {
        None
    };
    let sigma_space = sys_a
        .space_sigma
        .as_ref()
        .or(sys_b.space_sigma.as_ref());
    let mass_sigma = match (mapping.compare_sigma, sigma_space) {
        (true, Some(s)) => Some(assemble_mass(s, 1.0)?),
        _ => None,
    };

    let e0 = sys_a.energy(&trace_a.states[0])?;
    let normalizer = if e0 > 0.0 { e0 } else { 1.0 };

    let steps = trace_a.len().min(trace_b.len());
    let mut per_step = Vec::with_capacity(steps);
    for n in 0..steps {
        let sa = &trace_a.states[n];
        let sb = &trace_b.states[n];
        let disc_q = match (&mass_q, physical_q(sys_a.kind, sa), physical_q(sys_b.kind, sb)) {
            (Some(m), Some(qa), Some(qb)) => Some(m_norm_diff(m, qa, qb) / normalizer),
            _ => None,
        };
        let disc_v = match (
            &mass_v,
            physical_v(sys_a.kind, sa),
            physical_v(sys_b.kind, sb),
        ) {
            (Some(m), Some((va, st_a)), Some((vb, st_b))) if st_a == st_b => {
                Some(m_norm_diff(m, va, vb) / normalizer)
            }
            _ => None,
        };
        let image_via = if matches!(sys_a.kind, FormulationKind::MixedGradVS) {
            Some(sys_a)
        } else if matches!(sys_b.kind, FormulationKind::MixedGradVS) {
            Some(sys_b)
        } else {
            None
        };
        let disc_sigma = match (
            &mass_sigma,
            physical_sigma(sys_a.kind, sa, image_via),
            physical_sigma(sys_b.kind, sb, image_via),
        ) {
            (Some(m), Some(ref pa), Some(ref pb)) => Some(m_norm_diff(m, pa, pb) / normalizer),
            _ => None,
        };
        per_step.push(StepDiscrepancy {
            step: n,
            t: n as f64 * cfg.dt,
            disc_q,
            disc_v,
            disc_sigma,
            energy_a: trace_a.energies[n],
            energy_b: trace_b.energies[n],
        });
    }

    Ok(EquivalenceReport {
        pair: [sys_a.kind.id().to_string(), sys_b.kind.id().to_string()],
        integrator: scheme_id(cfg.scheme).to_string(),
        steps: steps.saturating_sub(1),
        dt: cfg.dt,
        tol,
        mapping: mapping.label,
        per_step,
        max_discrepancy: 0.0,
        pass: false,
    }
    .finish())
}

/// Check a parent two-field run against the literal reduced recurrence,
/// seeded from the parent's first two states.
pub fn check_reduction(
    spec: &FormulationSpec,
    reduction: ReductionKind,
    cfg: &IntegratorConfig,
    profile: Profile,
    tol: f64,
) -> Result<EquivalenceReport> {
    match reduction {
        ReductionKind::NewmarkSecondDifference => newmark_second_difference(spec, cfg, profile, tol),
        ReductionKind::StaggeredVelocityRecurrence => reduced_recurrence(
            spec,
            FormulationKind::MixedGradVS,
            Scheme::Leapfrog,
            reduction,
            cfg,
            profile,
            tol,
        ),
        ReductionKind::StressLeapfrogRecurrence => reduced_recurrence(
            spec,
            FormulationKind::MixedDivVS,
            Scheme::Leapfrog,
            reduction,
            cfg,
            profile,
            tol,
        ),
        ReductionKind::HatVelocityRecurrence => reduced_recurrence(
            spec,
            FormulationKind::MixedGradVS,
            Scheme::ImplicitMidpoint,
            reduction,
            cfg,
            profile,
            tol,
        ),
        ReductionKind::HatStressRecurrence => reduced_recurrence(
            spec,
            FormulationKind::MixedDivVS,
            Scheme::ImplicitMidpoint,
            reduction,
            cfg,
            profile,
            tol,
        ),
    }
}

/// Residual of the displacement second-difference identity along a
/// Newmark(1/2, 0) trajectory, in the max norm.
fn newmark_second_difference(
    spec: &FormulationSpec,
    cfg: &IntegratorConfig,
    profile: Profile,
    tol: f64,
) -> Result<EquivalenceReport> {
    let mut lag_spec = spec.clone();
    lag_spec.kind = FormulationKind::Lagrangian2nd;
    let sys = build_formulation(&lag_spec)?;
    let mut run_cfg = IntegratorConfig::new(Scheme::Newmark, cfg.dt, cfg.steps)
        .with_newmark_params(0.5, 0.0);
    run_cfg.solver = cfg.solver;
    let trace = sys.run(profile, &run_cfg)?;
    let SystemBlocks::SecondOrder { mass, stiffness } = &sys.blocks else {
        unreachable!()
    };
    let mut per_step = Vec::with_capacity(trace.len());
    for n in 0..trace.len() {
        let resid = if n >= 1 && n + 1 < trace.len() {
            let qm = &trace.states[n - 1].get(FieldName::Q)?.data;
            let q0 = &trace.states[n].get(FieldName::Q)?.data;
            let qp = &trace.states[n + 1].get(FieldName::Q)?.data;
            let second: Vec<f64> = (0..q0.len())
                .map(|i| qp[i] - 2.0 * q0[i] + qm[i])
                .collect();
            let lhs = mass.matvec(&second);
            let kq = stiffness.matvec(q0);
            lhs.iter()
                .zip(&kq)
                .map(|(a, b)| (a + cfg.dt * cfg.dt * b).abs())
                .fold(0.0f64, f64::max)
        } else {
            0.0
        };
        per_step.push(StepDiscrepancy {
            step: n,
            t: n as f64 * cfg.dt,
            disc_q: Some(resid),
            disc_v: None,
            disc_sigma: None,
            energy_a: trace.energies[n],
            energy_b: trace.energies[n],
        });
    }
    Ok(EquivalenceReport {
        pair: [
            FormulationKind::Lagrangian2nd.id().to_string(),
            ReductionKind::NewmarkSecondDifference.id().to_string(),
        ],
        integrator: "newmark".to_string(),
        steps: trace.len().saturating_sub(1),
        dt: cfg.dt,
        tol,
        mapping: "reduction",
        per_step,
        max_discrepancy: 0.0,
        pass: false,
    }
    .finish())
}

/// March the literal single-field recurrence next to its parent mixed run.
fn reduced_recurrence(
    spec: &FormulationSpec,
    parent_kind: FormulationKind,
    scheme: Scheme,
    reduction: ReductionKind,
    cfg: &IntegratorConfig,
    profile: Profile,
    tol: f64,
) -> Result<EquivalenceReport> {
    let mut parent_spec = spec.clone();
    parent_spec.kind = parent_kind;
    let sys = build_formulation(&parent_spec)?;
    let mut run_cfg = IntegratorConfig::new(scheme, cfg.dt, cfg.steps);
    run_cfg.solver = cfg.solver;
    run_cfg.midpoint_path = cfg.midpoint_path;
    let trace = sys.run(profile, &run_cfg)?;
    if trace.len() < 3 {
        return Err(Error::invalid_argument(
            "reduction checks need at least two parent steps",
        ));
    }

    // recurrence matrices assembled independently of the parent blocks
    let staggered = matches!(scheme, Scheme::Leapfrog | Scheme::StormerVerlet);
    let field = if parent_kind == FormulationKind::MixedGradVS {
        FieldName::V
    } else {
        FieldName::Sigma
    };
    let (m_red, k_red, norm_m) = match parent_kind {
        FormulationKind::MixedGradVS => {
            let v_space = &sys.space_v;
            let m = assemble_mass(v_space, spec.material.rho)?;
            let k = assemble_stiffness_grad(v_space, spec.material.k_stiff)?;
            let norm_m = assemble_mass(v_space, 1.0)?;
            (m, k, norm_m)
        }
        FormulationKind::MixedDivVS => {
            let flux = sys.space_sigma.as_ref().expect("mixed-div has a flux space");
            let m = assemble_mass(flux, spec.material.compliance())?;
            let k = assemble_stiffness_div(flux, spec.material.specific_volume())?;
            let norm_m = assemble_mass(flux, 1.0)?;
            (m, k, norm_m)
        }
        _ => unreachable!(),
    };

    // extract the parent's single-field sequence
    let parent_field =
        |n: usize| -> Result<&[f64]> { trace.states[n].get(field).map(|f| f.data.as_slice()) };

    let e0 = sys.energy(&trace.states[0])?;
    let normalizer = if e0 > 0.0 { e0 } else { 1.0 };
    let mut per_step = Vec::with_capacity(trace.len());
    for n in 0..2.min(trace.len()) {
        per_step.push(StepDiscrepancy {
            step: n,
            t: n as f64 * cfg.dt,
            disc_q: None,
            disc_v: if field == FieldName::V { Some(0.0) } else { None },
            disc_sigma: if field == FieldName::Sigma { Some(0.0) } else { None },
            energy_a: trace.energies[n],
            energy_b: trace.energies[n],
        });
    }

    let mut x_prev = parent_field(0)?.to_vec();
    let mut x_curr = parent_field(1)?.to_vec();
    for n in 2..trace.len() {
        let x_next = if staggered {
            second_difference_step(&m_red, &k_red, &x_prev, &x_curr, cfg.dt, &run_cfg.solver)?
        } else {
            hat_second_difference_step(&m_red, &k_red, &x_prev, &x_curr, cfg.dt, &run_cfg.solver)?
        };
        let disc = m_norm_diff(&norm_m, &x_next, parent_field(n)?) / normalizer;
        per_step.push(StepDiscrepancy {
            step: n,
            t: n as f64 * cfg.dt,
            disc_q: None,
            disc_v: if field == FieldName::V { Some(disc) } else { None },
            disc_sigma: if field == FieldName::Sigma {
                Some(disc)
            } else {
                None
            },
            energy_a: trace.energies[n],
            energy_b: trace.energies[n],
        });
        x_prev = x_curr;
        x_curr = x_next;
    }

    Ok(EquivalenceReport {
        pair: [parent_kind.id().to_string(), reduction.id().to_string()],
        integrator: scheme_id(scheme).to_string(),
        steps: trace.len().saturating_sub(1),
        dt: cfg.dt,
        tol,
        mapping: "reduction",
        per_step,
        max_discrepancy: 0.0,
        pass: false,
    }
    .finish())
}

/// Per-step residual of the pointwise identity c sigma_dot = grad(v) in
/// coefficient space (max norm), along a grad-side mixed trace.
pub fn pointwise_identity_residuals(
    sys: &DiscreteSystem,
    trace: &Trace,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let SystemBlocks::GradMixed {
        coupling,
        m_sigma_inv,
        ..
    } = &sys.blocks
    else {
        return Err(Error::invalid_state(
            "the pointwise identity applies to the grad-side mixed formulation",
        ));
    };
    let c = sys.material.compliance();
    let mut out = Vec::with_capacity(trace.len().saturating_sub(1));
    for n in 0..trace.len().saturating_sub(1) {
        let sigma_a = &trace.states[n].get(FieldName::Sigma)?.data;
        let sigma_b = &trace.states[n + 1].get(FieldName::Sigma)?.data;
        // velocity driving this sigma increment: the stored half-step value
        // for leapfrog, the step average for midpoint
        let v: Vec<f64> = if cfg.scheme.is_staggered() {
            trace.states[n].get(FieldName::V)?.data.clone()
        } else {
            let va = &trace.states[n].get(FieldName::V)?.data;
            let vb = &trace.states[n + 1].get(FieldName::V)?.data;
            va.iter().zip(vb).map(|(a, b)| 0.5 * (a + b)).collect()
        };
        // expansion coefficients of grad(v) in W: c * M_sigma^{-1} G v
        let grad_v = m_sigma_inv.matvec(&coupling.matvec(&v));
        let resid = sigma_a
            .iter()
            .zip(sigma_b)
            .zip(&grad_v)
            .map(|((s0, s1), g)| (c * (s1 - s0) / cfg.dt - c * g).abs())
            .fold(0.0f64, f64::max);
        out.push(resid);
    }
    Ok(out)
}

/// Energy behaviour of one run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyAudit {
    /// Conserved-form energy per step (two-time product for staggered runs).
    pub energies: Vec<f64>,
    /// Instantaneous quadratic energy per step.
    pub energies_instantaneous: Vec<f64>,
    /// Which mass-weighted quadratic form `energies` reports.
    pub conserved_form: &'static str,
    pub initial: f64,
    /// max |H^n - H^0| / H^0 of the conserved form.
    pub relative_drift: f64,
    /// Half the spread of the instantaneous energy, relative to H^0.
    pub oscillation_amplitude: f64,
    pub nonnegative: bool,
    pub instability: Option<InstabilityReport>,
}

/// Run a formulation and audit its discrete energy. Instability is reported,
/// not raised.
pub fn energy_audit(
    sys: &DiscreteSystem,
    cfg: &IntegratorConfig,
    profile: Profile,
) -> Result<EnergyAudit> {
    let trace = sys.run(profile, cfg)?;
    let form = if cfg.scheme.is_staggered() {
        "two-time-product"
    } else {
        "instantaneous"
    };
    Ok(audit_trace(&trace, form))
}

fn audit_trace(trace: &Trace, conserved_form: &'static str) -> EnergyAudit {
    let e0 = trace.energies[0];
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let relative_drift = trace
        .energies
        .iter()
        .map(|e| (e - e0).abs() / scale)
        .fold(0.0f64, f64::max);
    let (lo, hi) = trace
        .energies_instantaneous
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
            (lo.min(e), hi.max(e))
        });
    let nonnegative = trace.energies.iter().all(|&e| e >= -1e-12 * scale);
    EnergyAudit {
        energies: trace.energies.clone(),
        energies_instantaneous: trace.energies_instantaneous.clone(),
        conserved_form,
        initial: e0,
        relative_drift,
        oscillation_amplitude: (hi - lo) / (2.0 * scale),
        nonnegative,
        instability: trace.instability,
    }
}

/// Stability classification of a dt grid plus the refined empirical
/// threshold.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CflScan {
    pub entries: Vec<CflEntry>,
    pub lambda_max: f64,
    /// 2 / sqrt(lambda_max).
    pub threshold_predicted: f64,
    pub threshold_empirical: f64,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CflEntry {
    pub dt: f64,
    pub stable: bool,
    pub growth: f64,
}

/// Steps used for each stability probe.
const CFL_PROBE_STEPS: usize = 2000;

/// Classify each dt in the grid as stable or unstable under leapfrog by
/// energy-growth detection, then refine the threshold by bisection. The probe
/// state carries a deterministic broadband perturbation so every mode is
/// excited.
pub fn cfl_scan(
    sys: &DiscreteSystem,
    profile: Profile,
    dt_grid: &[f64],
    solver: &SolverConfig,
) -> Result<CflScan> {
    let (k, m) = sys.stability_pencil();
    let lambda_max = power_iteration_genevp(&k, &m, 1e-10)?;
    let threshold_predicted = 2.0 / lambda_max.sqrt();

    let probe = |dt: f64| -> Result<(bool, f64)> {
        let mut cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, CFL_PROBE_STEPS);
        cfg.solver = *solver;
        let mut state = sys.initial_state(profile, &cfg)?;
        perturb_velocity(&mut state);
        let trace = sys.run_from(state, &cfg)?;
        let growth = trace
            .instability
            .map(|i| i.growth)
            .unwrap_or_else(|| {
                let e0 = trace.energies[0].max(f64::MIN_POSITIVE);
                trace.energies.iter().fold(0.0f64, |m, e| m.max(e / e0))
            });
        Ok((trace.instability.is_none(), growth))
    };

    let mut entries = Vec::with_capacity(dt_grid.len());
    for &dt in dt_grid {
        let (stable, growth) = probe(dt)?;
        entries.push(CflEntry { dt, stable, growth });
    }

    // bracket the threshold and bisect
    let mut lo = entries
        .iter()
        .filter(|e| e.stable)
        .map(|e| e.dt)
        .fold(0.0f64, f64::max);
    let mut hi = entries
        .iter()
        .filter(|e| !e.stable)
        .map(|e| e.dt)
        .fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        lo = 0.25 * threshold_predicted;
        if !probe(lo)?.0 {
            return Err(Error::invalid_argument(
                "no stable step found; dt grid entirely unstable",
            ));
        }
    }
    if !hi.is_finite() {
        hi = 2.0 * threshold_predicted;
        if probe(hi)?.0 {
            return Err(Error::invalid_argument(
                "no unstable step found; dt grid entirely stable",
            ));
        }
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if probe(mid)?.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / threshold_predicted < 1e-5 {
            break;
        }
    }
    Ok(CflScan {
        entries,
        lambda_max,
        threshold_predicted,
        threshold_empirical: 0.5 * (lo + hi),
    })
}

/// Deterministic broadband perturbation of the velocity-like fields.
fn perturb_velocity(state: &mut SchemeState) {
    let fields: Vec<(FieldName, Stamp, Vec<f64>)> = state
        .fields()
        .filter(|(name, _)| matches!(name, FieldName::V | FieldName::VPrev))
        .map(|(name, f)| (name, f.stamp, f.data.clone()))
        .collect();
    for (name, stamp, mut data) in fields {
        let scale = 1e-4;
        for (i, v) in data.iter_mut().enumerate() {
            let hash = (i.wrapping_mul(2_654_435_761)) % 1009;
            *v += scale * (hash as f64 / 1009.0 - 0.5);
        }
        state.insert(name, stamp, data);
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceTable {
    pub h: Vec<f64>,
    pub dt: Vec<f64>,
    pub errors: Vec<f64>,
    /// log-ratio orders between consecutive rows (length = rows - 1).
    pub orders: Vec<f64>,
}

/// L2 error of the (native or reconstructed) primal variable at the final
/// time against the analytic standing wave, across a mesh sequence. The time
/// step is tied to the mesh through `dt_fraction` of the stability limit and
/// rounded so an integer number of steps lands exactly on `t_final`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    kind: FormulationKind,
    scheme: Scheme,
    material: MaterialParams,
    mode: usize,
    cells: &[usize],
    dt_fraction: f64,
    t_final: f64,
    solver: &SolverConfig,
) -> Result<ConvergenceTable> {
    if cells.is_empty() {
        return Err(Error::invalid_argument(
            "convergence studies need at least one mesh size",
        ));
    }
    let mut h = Vec::new();
    let mut dts = Vec::new();
    let mut errors = Vec::new();
    for &n in cells {
        let mesh = Arc::new(crate::mesh::build_interval_mesh(0.0, 1.0, n)?);
        let spec = FormulationSpec::new(kind, Arc::clone(&mesh), material);
        let sys = build_formulation(&spec)?;
        let (k_mat, m_mat) = sys.stability_pencil();
        let lambda = power_iteration_genevp(&k_mat, &m_mat, 1e-10)?;
        let dt_raw = dt_fraction * 2.0 / lambda.sqrt();
        let steps = (t_final / dt_raw).ceil() as usize;
        let dt = t_final / steps as f64;
        let mut cfg = IntegratorConfig::new(scheme, dt, steps);
        cfg.solver = *solver;
        let cfg = side_config(kind, &cfg);
        let profile = Profile::StandingMode {
            mode,
            amplitude: 1.0,
        };
        let trace = sys.run(profile, &cfg)?;
        if trace.instability.is_some() {
            return Err(Error::invalid_argument(format!(
                "convergence run unstable at n = {n}"
            )));
        }
        let final_state = trace.states.last().unwrap();
        let q = physical_q(kind, final_state).ok_or_else(|| {
            Error::InvalidPair(format!(
                "{} does not carry a primal variable to measure",
                kind.id()
            ))
        })?;
        let space = sys.space_q.as_ref().unwrap();
        let omega = mode as f64 * std::f64::consts::PI * (material.k_stiff / material.rho).sqrt();
        let exact = move |x: f64| {
            (mode as f64 * std::f64::consts::PI * x).sin() * (omega * t_final).cos()
        };
        // L2 error by quadrature
        let rule = gauss_legendre(space.degree() + 2)?;
        let mut err_sq = 0.0;
        for cell in 0..space.cell_count() {
            let scale = mesh.jacobian_det(cell);
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let x = mesh.map_to_physical(cell, *p);
                let qh = space.eval(q, cell, *p)[0];
                let d = qh - exact(x[0]);
                err_sq += w * scale * d * d;
            }
        }
        h.push(mesh.h_max());
        dts.push(dt);
        errors.push(err_sq.sqrt());
    }
    let mut orders = Vec::new();
    for i in 0..errors.len().saturating_sub(1) {
        if h[i] != h[i + 1] {
            orders.push((errors[i] / errors[i + 1]).ln() / (h[i] / h[i + 1]).ln());
        }
    }
    Ok(ConvergenceTable {
        h,
        dt: dts,
        errors,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;

    fn material() -> MaterialParams {
        MaterialParams::new(1.0, 1.0).unwrap()
    }

    fn spec_1d(kind: FormulationKind, n: usize) -> FormulationSpec {
        FormulationSpec::new(
            kind,
            Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap()),
            material(),
        )
    }

    fn mode1() -> Profile {
        Profile::StandingMode {
            mode: 1,
            amplitude: 1.0,
        }
    }

    fn reference_dt(sys: &DiscreteSystem, fraction: f64) -> f64 {
        let (k, m) = sys.stability_pencil();
        let lambda = power_iteration_genevp(&k, &m, 1e-10).unwrap();
        fraction * 2.0 / lambda.sqrt()
    }

    #[test]
    fn identical_formulations_have_bitwise_zero_discrepancy() {
        let spec = spec_1d(FormulationKind::HamiltonianVQ, 16);
        let sys_a = build_formulation(&spec).unwrap();
        let sys_b = build_formulation(&spec).unwrap();
        let dt = reference_dt(&sys_a, 0.9);
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, 50);
        let report = check_equivalence(&sys_a, &sys_b, &cfg, mode1(), 0.0).unwrap();
        assert_eq!(report.max_discrepancy, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn grad_pair_equivalence_under_leapfrog() {
        let spec_h = spec_1d(FormulationKind::HamiltonianVQ, 16);
        let spec_m = spec_1d(FormulationKind::MixedGradVS, 16);
        let spec_m = FormulationSpec {
            mesh: Arc::clone(&spec_h.mesh),
            ..spec_m
        };
        let a = build_formulation(&spec_h).unwrap();
        let b = build_formulation(&spec_m).unwrap();
        let dt = reference_dt(&a, 0.9);
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, 200);
        let report = check_equivalence(&a, &b, &cfg, mode1(), 1e-10).unwrap();
        assert!(
            report.pass,
            "max discrepancy {:.3e}",
            report.max_discrepancy
        );
        assert_eq!(report.mapping, "derivative-image");
        // all three fields compared at every step
        assert!(report.per_step.iter().all(|s| s.disc_q.is_some()
            && s.disc_v.is_some()
            && s.disc_sigma.is_some()));
    }

    #[test]
    fn newmark_leapfrog_matches_staggered_verlet_trajectories() {
        // Newmark(1/2, 0) on the second-order form and the staggered scheme on
        // the (v, q) form produce the same displacement sequence
        let spec_l = spec_1d(FormulationKind::Lagrangian2nd, 24);
        let spec_h = FormulationSpec {
            mesh: Arc::clone(&spec_l.mesh),
            ..spec_1d(FormulationKind::HamiltonianVQ, 24)
        };
        let a = build_formulation(&spec_l).unwrap();
        let b = build_formulation(&spec_h).unwrap();
        let dt = reference_dt(&b, 0.9);
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, 1000);
        let report = check_equivalence(&a, &b, &cfg, mode1(), 1e-12).unwrap();
        assert!(report.pass, "disc {:.3e}", report.max_discrepancy);
        assert_eq!(report.mapping, "identity");
    }

    #[test]
    fn newmark_trapezoid_matches_midpoint_trajectories() {
        let spec_l = spec_1d(FormulationKind::Lagrangian2nd, 24);
        let spec_h = FormulationSpec {
            mesh: Arc::clone(&spec_l.mesh),
            ..spec_1d(FormulationKind::HamiltonianVQ, 24)
        };
        let a = build_formulation(&spec_l).unwrap();
        let b = build_formulation(&spec_h).unwrap();
        let dt = reference_dt(&b, 0.9);
        let mut cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, dt, 500);
        cfg.solver.tol = 1e-13;
        let report = check_equivalence(&a, &b, &cfg, mode1(), 1e-10).unwrap();
        assert!(report.pass, "disc {:.3e}", report.max_discrepancy);
        // collocated velocities are compared too under the midpoint pairing
        assert!(report.per_step.iter().all(|s| s.disc_v.is_some()));
    }

    #[test]
    fn leapfrog_above_the_limit_reports_instability() {
        let sys = build_formulation(&spec_1d(FormulationKind::HamiltonianVQ, 32)).unwrap();
        let dt = reference_dt(&sys, 1.01);
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, 2000);
        let audit = energy_audit(&sys, &cfg, mode1()).unwrap();
        assert!(audit.instability.is_some());
        let report = audit.instability.unwrap();
        assert!(report.growth > 10.0 || !report.growth.is_finite());
    }

    #[test]
    fn incompatible_pair_is_rejected() {
        let a = build_formulation(&spec_1d(FormulationKind::MixedGradVS, 8)).unwrap();
        let spec_b = FormulationSpec {
            mesh: Arc::clone(a.mesh()),
            ..spec_1d(FormulationKind::StressOnly2nd, 8)
        };
        let b = build_formulation(&spec_b).unwrap();
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, 0.01, 10);
        assert!(matches!(
            check_equivalence(&a, &b, &cfg, mode1(), 1e-10),
            Err(Error::InvalidPair(_))
        ));
    }

    #[test]
    fn meshes_must_match() {
        let a = build_formulation(&spec_1d(FormulationKind::HamiltonianVQ, 8)).unwrap();
        let b = build_formulation(&spec_1d(FormulationKind::MixedGradVS, 8)).unwrap();
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, 0.01, 10);
        assert!(check_equivalence(&a, &b, &cfg, mode1(), 1e-10).is_err());
    }

    #[test]
    fn newmark_second_difference_residual_is_machine_small() {
        let spec = spec_1d(FormulationKind::Lagrangian2nd, 16);
        let sys = build_formulation(&spec).unwrap();
        let dt = reference_dt(&sys, 0.5);
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, 100);
        let report =
            check_reduction(&spec, ReductionKind::NewmarkSecondDifference, &cfg, mode1(), 1e-12)
                .unwrap();
        assert!(report.pass, "residual {:.3e}", report.max_discrepancy);
    }

    #[test]
    fn staggered_velocity_recurrence_matches_parent() {
        let spec = spec_1d(FormulationKind::MixedGradVS, 16);
        let sys = build_formulation(&spec).unwrap();
        let dt = reference_dt(&sys, 0.9);
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, 200);
        let report = check_reduction(
            &spec,
            ReductionKind::StaggeredVelocityRecurrence,
            &cfg,
            mode1(),
            1e-10,
        )
        .unwrap();
        assert!(report.pass, "disc {:.3e}", report.max_discrepancy);
    }

    #[test]
    fn hat_stress_recurrence_matches_parent() {
        let spec = spec_1d(FormulationKind::MixedDivVS, 16);
        let sys = build_formulation(&spec).unwrap();
        let dt = reference_dt(&sys, 0.9);
        let cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, dt, 100);
        let report = check_reduction(
            &spec,
            ReductionKind::HatStressRecurrence,
            &cfg,
            mode1(),
            1e-9,
        )
        .unwrap();
        assert!(report.pass, "disc {:.3e}", report.max_discrepancy);
    }

    #[test]
    fn pointwise_identity_holds_along_mixed_run() {
        let spec = spec_1d(FormulationKind::MixedGradVS, 32);
        let sys = build_formulation(&spec).unwrap();
        let dt = reference_dt(&sys, 0.9);
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, 200);
        let trace = sys.run(mode1(), &cfg).unwrap();
        let residuals = pointwise_identity_residuals(&sys, &trace, &cfg).unwrap();
        let max = residuals.iter().fold(0.0f64, |a, &b| a.max(b));
        assert!(max <= 1e-12, "max pointwise residual {max:.3e}");
    }

    #[test]
    fn midpoint_energy_is_conserved() {
        let sys = build_formulation(&spec_1d(FormulationKind::MixedGradVS, 32)).unwrap();
        let dt = reference_dt(&sys, 0.9);
        let mut cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, dt, 1000);
        cfg.solver.tol = 1e-13;
        let audit = energy_audit(&sys, &cfg, mode1()).unwrap();
        assert!(audit.instability.is_none());
        assert!(audit.nonnegative);
        assert!(
            audit.relative_drift <= 1e-10,
            "drift {:.3e}",
            audit.relative_drift
        );
    }

    #[test]
    fn leapfrog_product_energy_is_conserved() {
        let sys = build_formulation(&spec_1d(FormulationKind::HamiltonianVQ, 32)).unwrap();
        let dt = reference_dt(&sys, 0.9);
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, dt, 1000);
        let audit = energy_audit(&sys, &cfg, mode1()).unwrap();
        assert!(audit.instability.is_none());
        assert!(
            audit.relative_drift <= 1e-10,
            "drift {:.3e}",
            audit.relative_drift
        );
        // the instantaneous reading oscillates but stays nonnegative
        assert!(audit
            .energies_instantaneous
            .iter()
            .all(|&e| e >= 0.0));
    }

    #[test]
    fn zero_profile_trace_is_identically_zero() {
        let sys = build_formulation(&spec_1d(FormulationKind::MixedGradVS, 8)).unwrap();
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, 0.01, 20);
        let audit = energy_audit(&sys, &cfg, Profile::Zero).unwrap();
        assert!(audit.energies.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn scalar_oscillator_cfl_threshold_is_two() {
        // the two-cell Dirichlet system has a single DOF with
        // omega^2 = 12 k / rho; k = 1/12 makes it the unit oscillator,
        // whose classical leapfrog limit is dt_max = 2
        let spec = FormulationSpec::new(
            FormulationKind::HamiltonianVQ,
            Arc::new(build_interval_mesh(0.0, 1.0, 2).unwrap()),
            MaterialParams::new(1.0, 1.0 / 12.0).unwrap(),
        );
        let sys = build_formulation(&spec).unwrap();
        assert!((sys_threshold(&sys) - 2.0).abs() < 1e-8);
        let grid = [1.0, 1.8, 2.1, 3.0];
        let scan = cfl_scan(&sys, mode1(), &grid, &SolverConfig::default()).unwrap();
        assert!((scan.threshold_empirical - 2.0).abs() <= 0.04, "{scan:?}");
        assert!(scan.entries[0].stable && scan.entries[1].stable);
        assert!(!scan.entries[2].stable && !scan.entries[3].stable);
    }

    fn sys_threshold(sys: &DiscreteSystem) -> f64 {
        let (k, m) = sys.stability_pencil();
        2.0 / power_iteration_genevp(&k, &m, 1e-10).unwrap().sqrt()
    }

    #[test]
    fn cfl_threshold_scales_with_mesh_size() {
        let t16 = sys_threshold(
            &build_formulation(&spec_1d(FormulationKind::HamiltonianVQ, 16)).unwrap(),
        );
        let t32 = sys_threshold(
            &build_formulation(&spec_1d(FormulationKind::HamiltonianVQ, 32)).unwrap(),
        );
        let ratio = t16 / t32;
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn convergence_second_order_for_cg1_leapfrog() {
        let table = convergence_study(
            FormulationKind::HamiltonianVQ,
            Scheme::Leapfrog,
            material(),
            1,
            &[16, 32, 64],
            0.5,
            1.0,
            &SolverConfig::default(),
        )
        .unwrap();
        for (i, order) in table.orders.iter().enumerate() {
            assert!(
                (order - 2.0).abs() <= 0.2,
                "order[{i}] = {order}, errors {:?}",
                table.errors
            );
        }
        // piecewise-linears cannot represent the sine: errors stay nonzero
        assert!(table.errors.iter().all(|&e| e > 1e-6));
    }

    #[test]
    fn refining_dt_alone_plateaus_at_spatial_error() {
        let mut errs = Vec::new();
        for frac in [0.5, 0.25, 0.125] {
            let table = convergence_study(
                FormulationKind::HamiltonianVQ,
                Scheme::ImplicitMidpoint,
                material(),
                1,
                &[32],
                frac,
                1.0,
                &SolverConfig::default(),
            )
            .unwrap();
            errs.push(table.errors[0]);
        }
        // halving dt twice barely moves the error once space dominates
        let rel = (errs[1] - errs[2]).abs() / errs[2];
        assert!(rel < 0.05, "dt refinement still moving the error: {errs:?}");
    }
}
