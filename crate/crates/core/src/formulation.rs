//! The formulation catalog: each entry binds one way of writing the wave (or
//! transverse-mode electromagnetic) problem to its assembled matrices, state
//! layout, admissible integrators and energy functional.
//!
//! Grad-side formulations put the Dirichlet condition on the primal/velocity
//! space; div-side formulations carry it naturally and leave the flux space
//! unconstrained. Mixed formulations build their L2 space as the exact image
//! of the differential operator, so the semi-discrete identities hold
//! coefficientwise and scheme equivalences are exact up to roundoff.

use std::sync::Arc;

use crate::assembly::{
    assemble_coupling_curl, assemble_coupling_div, assemble_coupling_grad, assemble_mass,
    assemble_mass_inverse, assemble_stiffness_div, assemble_stiffness_grad, MaterialParams,
};
use crate::error::{Error, Result};
use crate::integrator::{
    midpoint_step, newmark_step, stormer_verlet_step, three_field_midpoint_step,
    three_field_sv_step, trapezoidal_reconstruct, FieldName, IntegratorConfig, Reconstruction,
    ReconstructionInput, Scheme, SchemeState, SkewPair, Stamp, Stamped, ThreeFieldBlocks,
};
use crate::mesh::Mesh;
use crate::solver::{self, solve_spd, SolverConfig};
use crate::space::{derivative_space, make_space, make_vector_space, BoundaryCondition, Family, FunctionSpace};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FormulationKind {
    Lagrangian2nd,
    HamiltonianVQ,
    MixedGradVS,
    MixedDivVS,
    ThreeFieldVQS,
    VelocityOnly2nd,
    StressOnly2nd,
    MaxwellTM,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 8] = [
        FormulationKind::Lagrangian2nd,
        FormulationKind::HamiltonianVQ,
        FormulationKind::MixedGradVS,
        FormulationKind::MixedDivVS,
        FormulationKind::ThreeFieldVQS,
        FormulationKind::VelocityOnly2nd,
        FormulationKind::StressOnly2nd,
        FormulationKind::MaxwellTM,
    ];

    /// Stable string identifier used by config files and the CLI.
    pub fn id(&self) -> &'static str {
        match self {
            FormulationKind::Lagrangian2nd => "lagrangian-2nd",
            FormulationKind::HamiltonianVQ => "hamiltonian-vq",
            FormulationKind::MixedGradVS => "mixed-grad-vs",
            FormulationKind::MixedDivVS => "mixed-div-vs",
            FormulationKind::ThreeFieldVQS => "three-field-vqs",
            FormulationKind::VelocityOnly2nd => "velocity-only-2nd",
            FormulationKind::StressOnly2nd => "stress-only-2nd",
            FormulationKind::MaxwellTM => "maxwell-tm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.id() == s)
            .ok_or_else(|| {
                Error::invalid_argument(format!(
                    "unknown formulation '{s}' (known: {})",
                    Self::ALL.map(|k| k.id()).join(", ")
                ))
            })
    }

    /// Second-order-in-time kinds, stepped by the Newmark family.
    pub fn is_second_order(&self) -> bool {
        matches!(
            self,
            FormulationKind::Lagrangian2nd
                | FormulationKind::VelocityOnly2nd
                | FormulationKind::StressOnly2nd
        )
    }
}

/// Named analytic initial profiles.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum Profile {
    Zero,
    /// Standing mode: amplitude * sin(m pi x^) (times sin(m pi y^) in 2D),
    /// started at rest.
    StandingMode { mode: usize, amplitude: f64 },
}

impl Profile {
    fn eval_q(&self, mesh: &Mesh, x: [f64; 2]) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::StandingMode { mode, amplitude } => {
                let m = *mode as f64;
                match mesh.dim() {
                    1 => {
                        let (a, b) = domain_bounds_1d(mesh);
                        let xh = (x[0] - a) / (b - a);
                        amplitude * (m * std::f64::consts::PI * xh).sin()
                    }
                    _ => {
                        let (x0, x1, y0, y1) = domain_bounds_2d(mesh);
                        let xh = (x[0] - x0) / (x1 - x0);
                        let yh = (x[1] - y0) / (y1 - y0);
                        amplitude
                            * (m * std::f64::consts::PI * xh).sin()
                            * (m * std::f64::consts::PI * yh).sin()
                    }
                }
            }
        }
    }
}

fn domain_bounds_1d(mesh: &Mesh) -> (f64, f64) {
    (mesh.vertex(0)[0], mesh.vertex(mesh.vertex_count() - 1)[0])
}

fn domain_bounds_2d(mesh: &Mesh) -> (f64, f64, f64, f64) {
    let mut x0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for i in 0..mesh.vertex_count() {
        let v = mesh.vertex(i);
        x0 = x0.min(v[0]);
        x1 = x1.max(v[0]);
        y0 = y0.min(v[1]);
        y1 = y1.max(v[1]);
    }
    (x0, x1, y0, y1)
}

/// What to build: formulation kind, mesh, material, polynomial degree for the
/// 1D primal space (2D always uses the lowest-order compatible pairs).
#[derive(Debug, Clone)]
pub struct FormulationSpec {
    pub kind: FormulationKind,
    pub mesh: Arc<Mesh>,
    pub material: MaterialParams,
    pub degree: usize,
}

impl FormulationSpec {
    pub fn new(kind: FormulationKind, mesh: Arc<Mesh>, material: MaterialParams) -> Self {
        FormulationSpec {
            kind,
            mesh,
            material,
            degree: 1,
        }
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }
}

/// Assembled blocks per formulation family.
#[derive(Debug)]
pub enum SystemBlocks {
    /// M xdd = -K x (Lagrangian in q, velocity-only in v, stress-only in sigma).
    SecondOrder { mass: CsrMatrix, stiffness: CsrMatrix },
    /// M v' = -K q, q' = v, as a first-order pair.
    CanonicalVQ {
        mass: CsrMatrix,
        minus_stiffness: CsrMatrix,
        identity: CsrMatrix,
    },
    /// M_v v' = -G^T sigma, M_sigma sigma' = G v (also the electromagnetic
    /// adapter, with the curl coupling in place of G).
    GradMixed {
        m_v: CsrMatrix,
        m_sigma: CsrMatrix,
        coupling: CsrMatrix,
        neg_coupling_t: CsrMatrix,
        m_sigma_inv: CsrMatrix,
    },
    /// M_v v' = D sigma, M_sigma sigma' = -D^T v.
    DivMixed {
        m_v: CsrMatrix,
        m_sigma: CsrMatrix,
        coupling_div: CsrMatrix,
        neg_coupling_div_t: CsrMatrix,
        m_v_inv: CsrMatrix,
    },
    /// (v, q, sigma) with the algebraic constraint M_sigma sigma = -D^T q.
    ThreeField {
        m_v: CsrMatrix,
        m_sigma: CsrMatrix,
        coupling_div: CsrMatrix,
        m_v_inv: CsrMatrix,
    },
}

/// A formulation bound to its mesh, spaces and matrices; immutable after
/// construction and safe to share across threads.
#[derive(Debug)]
pub struct DiscreteSystem {
    pub kind: FormulationKind,
    pub material: MaterialParams,
    /// Space of the velocity-like unknown (or the second-order unknown).
    pub space_v: Arc<FunctionSpace>,
    /// Space of the stress-like unknown, where present.
    pub space_sigma: Option<Arc<FunctionSpace>>,
    /// Space carrying the primal variable q (native or reconstructed).
    pub space_q: Option<Arc<FunctionSpace>>,
    pub blocks: SystemBlocks,
}

/// Assemble the discrete system for a formulation.
pub fn build_formulation(spec: &FormulationSpec) -> Result<DiscreteSystem> {
    let mesh = &spec.mesh;
    let dim = mesh.dim();
    let mat = spec.material;
    let k = if dim == 1 { spec.degree } else { 1 };
    if dim == 2 && spec.degree != 1 {
        return Err(Error::unsupported_space(
            "2D formulations use first-order spaces",
        ));
    }
    match spec.kind {
        FormulationKind::Lagrangian2nd
        | FormulationKind::HamiltonianVQ
        | FormulationKind::VelocityOnly2nd => {
            let v = Arc::new(make_space(
                mesh,
                Family::ContinuousLagrange,
                k,
                BoundaryCondition::HomogeneousDirichlet,
            )?);
            let mass = assemble_mass(&v, mat.rho)?;
            let stiffness = assemble_stiffness_grad(&v, mat.k_stiff)?;
            let blocks = if spec.kind == FormulationKind::HamiltonianVQ {
                SystemBlocks::CanonicalVQ {
                    identity: CsrMatrix::identity(v.dof_count()),
                    minus_stiffness: stiffness.scale(-1.0),
                    mass,
                }
            } else {
                SystemBlocks::SecondOrder { mass, stiffness }
            };
            Ok(DiscreteSystem {
                kind: spec.kind,
                material: mat,
                space_q: Some(Arc::clone(&v)),
                space_sigma: None,
                space_v: v,
                blocks,
            })
        }
        FormulationKind::MixedGradVS => {
            if dim != 1 {
                return Err(Error::compatibility(
                    "the grad-side mixed pair is compatible in 1D only; use mixed-div-vs in 2D",
                ));
            }
            let v = Arc::new(make_space(
                mesh,
                Family::ContinuousLagrange,
                k,
                BoundaryCondition::HomogeneousDirichlet,
            )?);
            let w = Arc::new(derivative_space(&v)?);
            let m_v = assemble_mass(&v, mat.rho)?;
            let m_sigma = assemble_mass(&w, mat.compliance())?;
            let m_sigma_inv = assemble_mass_inverse(&w, mat.compliance())?;
            let coupling = assemble_coupling_grad(&w, &v)?;
            let neg_coupling_t = coupling.transpose().scale(-1.0);
            Ok(DiscreteSystem {
                kind: spec.kind,
                material: mat,
                space_q: Some(Arc::clone(&v)),
                space_sigma: Some(w),
                space_v: v,
                blocks: SystemBlocks::GradMixed {
                    m_v,
                    m_sigma,
                    coupling,
                    neg_coupling_t,
                    m_sigma_inv,
                },
            })
        }
        FormulationKind::MixedDivVS | FormulationKind::ThreeFieldVQS | FormulationKind::StressOnly2nd => {
            let flux = Arc::new(match dim {
                1 => make_space(mesh, Family::ContinuousLagrange, k, BoundaryCondition::None)?,
                _ => make_space(mesh, Family::RaviartThomas0, 1, BoundaryCondition::None)?,
            });
            let w = Arc::new(derivative_space(&flux)?);
            let m_sigma = assemble_mass(&flux, mat.compliance())?;
            let coupling_div = assemble_coupling_div(&w, &flux)?;
            match spec.kind {
                FormulationKind::StressOnly2nd => {
                    let stiffness = assemble_stiffness_div(&flux, mat.specific_volume())?;
                    Ok(DiscreteSystem {
                        kind: spec.kind,
                        material: mat,
                        space_q: Some(Arc::clone(&w)),
                        space_sigma: Some(Arc::clone(&flux)),
                        space_v: flux,
                        blocks: SystemBlocks::SecondOrder {
                            mass: m_sigma,
                            stiffness,
                        },
                    })
                }
                FormulationKind::MixedDivVS => {
                    let m_v = assemble_mass(&w, mat.rho)?;
                    let m_v_inv = assemble_mass_inverse(&w, mat.rho)?;
                    let neg_coupling_div_t = coupling_div.transpose().scale(-1.0);
                    Ok(DiscreteSystem {
                        kind: spec.kind,
                        material: mat,
                        space_q: Some(Arc::clone(&w)),
                        space_sigma: Some(flux),
                        space_v: w,
                        blocks: SystemBlocks::DivMixed {
                            m_v,
                            m_sigma,
                            coupling_div,
                            neg_coupling_div_t,
                            m_v_inv,
                        },
                    })
                }
                _ => {
                    let m_v = assemble_mass(&w, mat.rho)?;
                    let m_v_inv = assemble_mass_inverse(&w, mat.rho)?;
                    Ok(DiscreteSystem {
                        kind: spec.kind,
                        material: mat,
                        space_q: Some(Arc::clone(&w)),
                        space_sigma: Some(flux),
                        space_v: w,
                        blocks: SystemBlocks::ThreeField {
                            m_v,
                            m_sigma,
                            coupling_div,
                            m_v_inv,
                        },
                    })
                }
            }
        }
        FormulationKind::MaxwellTM => maxwell_tm_adapter(spec),
    }
}

/// Transverse-mode electromagnetic adapter on a triangle mesh: scalar E_z in
/// the Dirichlet Lagrange space, in-plane H in the piecewise-constant vector
/// space, coupled through the rotated gradient (the scalar curl). The system
/// has the same block structure as the grad-side mixed pair with
/// epsilon <-> rho and mu <-> compliance.
pub fn maxwell_tm_adapter(spec: &FormulationSpec) -> Result<DiscreteSystem> {
    let mesh = &spec.mesh;
    if mesh.dim() != 2 {
        return Err(Error::invalid_argument(
            "the transverse-mode adapter needs a 2D mesh",
        ));
    }
    let mat = spec.material;
    let e_space = Arc::new(make_space(
        mesh,
        Family::ContinuousLagrange,
        1,
        BoundaryCondition::HomogeneousDirichlet,
    )?);
    let h_space = Arc::new(make_vector_space(mesh, Family::DiscontinuousLagrange, 0)?);
    let m_e = assemble_mass(&e_space, mat.rho)?;
    let m_h = assemble_mass(&h_space, mat.compliance())?;
    let m_h_inv = assemble_mass_inverse(&h_space, mat.compliance())?;
    let coupling = assemble_coupling_curl(&h_space, &e_space)?;
    let neg_coupling_t = coupling.transpose().scale(-1.0);
    Ok(DiscreteSystem {
        kind: FormulationKind::MaxwellTM,
        material: mat,
        space_q: None,
        space_sigma: Some(h_space),
        space_v: e_space,
        blocks: SystemBlocks::GradMixed {
            m_v: m_e,
            m_sigma: m_h,
            coupling,
            neg_coupling_t,
            m_sigma_inv: m_h_inv,
        },
    })
}

impl DiscreteSystem {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.space_v.mesh()
    }

    fn skew_pair_sv(&self) -> Result<SkewPair<'_>> {
        match &self.blocks {
            SystemBlocks::CanonicalVQ {
                mass,
                minus_stiffness,
                identity,
            } => Ok(SkewPair {
                m_y: mass,
                off_yz: minus_stiffness,
                m_z: identity,
                off_zy: identity,
                m_z_inv: identity,
                y: FieldName::V,
                z: FieldName::Q,
            }),
            SystemBlocks::GradMixed {
                m_v,
                m_sigma,
                coupling,
                neg_coupling_t,
                m_sigma_inv,
            } => Ok(SkewPair {
                m_y: m_v,
                off_yz: neg_coupling_t,
                m_z: m_sigma,
                off_zy: coupling,
                m_z_inv: m_sigma_inv,
                y: FieldName::V,
                z: FieldName::Sigma,
            }),
            SystemBlocks::DivMixed {
                m_v,
                m_sigma,
                coupling_div,
                neg_coupling_div_t,
                ..
            } => Ok(SkewPair {
                m_y: m_v,
                off_yz: coupling_div,
                m_z: m_sigma,
                off_zy: neg_coupling_div_t,
                // unused by the staggered stepper; the midpoint pair swaps roles
                m_z_inv: m_sigma,
                y: FieldName::V,
                z: FieldName::Sigma,
            }),
            _ => Err(Error::invalid_state(
                "staggered stepping needs a first-order two-field formulation",
            )),
        }
    }

    fn skew_pair_midpoint(&self) -> Result<SkewPair<'_>> {
        match &self.blocks {
            SystemBlocks::DivMixed {
                m_v,
                m_sigma,
                coupling_div,
                neg_coupling_div_t,
                m_v_inv,
            } => Ok(SkewPair {
                // eliminate v: its discontinuous mass inverts exactly
                m_y: m_sigma,
                off_yz: neg_coupling_div_t,
                m_z: m_v,
                off_zy: coupling_div,
                m_z_inv: m_v_inv,
                y: FieldName::Sigma,
                z: FieldName::V,
            }),
            _ => self.skew_pair_sv(),
        }
    }

    fn three_field_blocks(&self) -> Result<ThreeFieldBlocks<'_>> {
        match &self.blocks {
            SystemBlocks::ThreeField {
                m_v,
                m_sigma,
                coupling_div,
                m_v_inv,
            } => Ok(ThreeFieldBlocks {
                m_v,
                m_sigma,
                coupling_div,
                m_v_inv,
            }),
            _ => Err(Error::invalid_state("not a three-field formulation")),
        }
    }

    /// Advance one step with the scheme selected in `cfg`.
    pub fn step(&self, state: &SchemeState, cfg: &IntegratorConfig) -> Result<SchemeState> {
        match (cfg.scheme, &self.blocks) {
            (Scheme::Newmark, SystemBlocks::SecondOrder { mass, stiffness }) => {
                newmark_step(mass, stiffness, state, cfg)
            }
            (Scheme::Newmark, _) => Err(Error::invalid_state(
                "the Newmark family applies to second-order formulations",
            )),
            (Scheme::Leapfrog | Scheme::StormerVerlet, SystemBlocks::ThreeField { .. }) => {
                three_field_sv_step(&self.three_field_blocks()?, state, cfg)
            }
            (Scheme::ImplicitMidpoint, SystemBlocks::ThreeField { .. }) => {
                three_field_midpoint_step(&self.three_field_blocks()?, state, cfg)
            }
            (Scheme::Leapfrog | Scheme::StormerVerlet, _) => {
                stormer_verlet_step(&self.skew_pair_sv()?, state, cfg)
            }
            (Scheme::ImplicitMidpoint, _) => midpoint_step(&self.skew_pair_midpoint()?, state, cfg),
        }
    }

    /// Conjugate momentum of the (v, q) Hamiltonian form: p = M_rho v.
    pub fn momentum(&self, state: &SchemeState) -> Result<Vec<f64>> {
        match &self.blocks {
            SystemBlocks::CanonicalVQ { mass, .. } => {
                Ok(mass.matvec(&state.get(FieldName::V)?.data))
            }
            _ => Err(Error::invalid_state(
                "the momentum wrapper applies to the Hamiltonian (v, q) form",
            )),
        }
    }

    /// Initial state for the chosen scheme, following the equivalence
    /// hypotheses: sigma starts as the exact image of the primal gradient
    /// (grad side) or as the constraint solve (div side), never as an
    /// independent interpolation.
    pub fn initial_state(&self, profile: Profile, cfg: &IntegratorConfig) -> Result<SchemeState> {
        cfg.validate()?;
        let mesh = self.mesh().clone();
        let tight = cfg.solver.with_tol(cfg.solver.tol.min(1e-13));
        let q_of = |space: &FunctionSpace| -> Result<Vec<f64>> {
            space.interpolate(|x| profile.eval_q(&mesh, x))
        };
        let mut state = SchemeState::new(0);
        match &self.blocks {
            SystemBlocks::SecondOrder { mass, stiffness } => {
                if cfg.scheme != Scheme::Newmark {
                    return Err(Error::invalid_state(
                        "second-order formulations are stepped by the Newmark family",
                    ));
                }
                let (u0, udot0) = match self.kind {
                    FormulationKind::Lagrangian2nd => {
                        (q_of(&self.space_v)?, vec![0.0; self.space_v.dof_count()])
                    }
                    FormulationKind::VelocityOnly2nd => {
                        // v(0) = 0, M v'(0) = -K qtilde(0)
                        let q0 = q_of(&self.space_v)?;
                        let rhs: Vec<f64> = stiffness.matvec(&q0).iter().map(|x| -x).collect();
                        let vdot = solve_spd(mass, &rhs, &tight)?.x;
                        (vec![0.0; self.space_v.dof_count()], vdot)
                    }
                    FormulationKind::StressOnly2nd => {
                        // sigma(0) from the constraint, sigma'(0) = 0 at rest
                        let w = self.space_q.as_ref().expect("stress-only has a W space");
                        let q0 = q_of(w)?;
                        let sigma0 = self.constraint_sigma(&q0, &tight)?;
                        (sigma0, vec![0.0; self.space_v.dof_count()])
                    }
                    _ => unreachable!(),
                };
                let rhs: Vec<f64> = stiffness.matvec(&u0).iter().map(|x| -x).collect();
                let a0 = solve_spd(mass, &rhs, &tight)?.x;
                state.insert(FieldName::Q, Stamp::Integer(0), u0);
                state.insert(FieldName::V, Stamp::Integer(0), udot0);
                state.insert(FieldName::A, Stamp::Integer(0), a0);
            }
            SystemBlocks::CanonicalVQ { mass, minus_stiffness, .. } => {
                let q0 = q_of(&self.space_v)?;
                let v0 = vec![0.0; self.space_v.dof_count()];
                self.insert_first_order_pair(
                    &mut state,
                    cfg,
                    (FieldName::V, v0),
                    (FieldName::Q, q0),
                    mass,
                    minus_stiffness,
                    &tight,
                )?;
            }
            SystemBlocks::GradMixed {
                m_v,
                coupling,
                neg_coupling_t,
                m_sigma_inv,
                ..
            } => {
                let (v0, sigma0) = if self.kind == FormulationKind::MaxwellTM {
                    // E from the profile, H at rest
                    let e0 = q_of(&self.space_v)?;
                    let h0 = vec![0.0; self.space_sigma.as_ref().unwrap().dof_count()];
                    (e0, h0)
                } else {
                    let v0 = vec![0.0; self.space_v.dof_count()];
                    // sigma0 = k * (expansion of grad q0 in W) = M_sigma^{-1} G q0
                    let q0 = q_of(&self.space_v)?;
                    let sigma0 = m_sigma_inv.matvec(&coupling.matvec(&q0));
                    (v0, sigma0)
                };
                self.insert_first_order_pair(
                    &mut state,
                    cfg,
                    (FieldName::V, v0),
                    (FieldName::Sigma, sigma0),
                    m_v,
                    neg_coupling_t,
                    &tight,
                )?;
            }
            SystemBlocks::DivMixed {
                m_v, coupling_div, ..
            } => {
                let w = self.space_v.as_ref();
                let v0 = vec![0.0; w.dof_count()];
                let q0 = q_of(w)?;
                let sigma0 = self.constraint_sigma(&q0, &tight)?;
                self.insert_first_order_pair(
                    &mut state,
                    cfg,
                    (FieldName::V, v0),
                    (FieldName::Sigma, sigma0),
                    m_v,
                    coupling_div,
                    &tight,
                )?;
            }
            SystemBlocks::ThreeField {
                m_v, coupling_div, ..
            } => {
                let w = self.space_v.as_ref();
                let v0 = vec![0.0; w.dof_count()];
                let q0 = q_of(w)?;
                let sigma0 = self.constraint_sigma(&q0, &tight)?;
                match cfg.scheme {
                    Scheme::Leapfrog | Scheme::StormerVerlet => {
                        let rhs = coupling_div.matvec(&sigma0);
                        let a0 = solve_spd(m_v, &rhs, &tight)?.x;
                        let mut v_half = v0.clone();
                        solver::axpy(cfg.dt / 2.0, &a0, &mut v_half);
                        let mut v_prev = v0;
                        solver::axpy(-cfg.dt / 2.0, &a0, &mut v_prev);
                        state.insert(FieldName::V, Stamp::Half(0), v_half);
                        state.insert(FieldName::VPrev, Stamp::Half(-1), v_prev);
                    }
                    Scheme::ImplicitMidpoint => {
                        state.insert(FieldName::V, Stamp::Integer(0), v0);
                    }
                    Scheme::Newmark => {
                        return Err(Error::invalid_state(
                            "the three-field formulation is first order in time",
                        ))
                    }
                }
                state.insert(FieldName::Q, Stamp::Integer(0), q0);
                state.insert(FieldName::Sigma, Stamp::Integer(0), sigma0);
            }
        }
        Ok(state)
    }

    /// sigma from the div-side constraint M_sigma sigma = -D^T q.
    fn constraint_sigma(&self, q: &[f64], solver_cfg: &SolverConfig) -> Result<Vec<f64>> {
        let (m_sigma, d) = match &self.blocks {
            SystemBlocks::DivMixed {
                m_sigma,
                coupling_div,
                ..
            }
            | SystemBlocks::ThreeField {
                m_sigma,
                coupling_div,
                ..
            } => (m_sigma, coupling_div),
            SystemBlocks::SecondOrder { mass, .. }
                if self.kind == FormulationKind::StressOnly2nd =>
            {
                // rebuild D on the fly is avoided: stress-only keeps it implicit
                // through the shared spaces
                let w = self.space_q.as_ref().unwrap();
                let flux = self.space_sigma.as_ref().unwrap();
                let d = assemble_coupling_div(w, flux)?;
                let rhs: Vec<f64> = d.matvec_transpose(q).iter().map(|x| -x).collect();
                return Ok(solve_spd(mass, &rhs, solver_cfg)?.x);
            }
            _ => {
                return Err(Error::invalid_state(
                    "constraint initialization applies to div-side formulations",
                ))
            }
        };
        let rhs: Vec<f64> = d.matvec_transpose(q).iter().map(|x| -x).collect();
        Ok(solve_spd(m_sigma, &rhs, solver_cfg)?.x)
    }

    #[allow(clippy::too_many_arguments)]
    fn insert_first_order_pair(
        &self,
        state: &mut SchemeState,
        cfg: &IntegratorConfig,
        (y_name, y0): (FieldName, Vec<f64>),
        (z_name, z0): (FieldName, Vec<f64>),
        m_y: &CsrMatrix,
        off_yz: &CsrMatrix,
        solver_cfg: &SolverConfig,
    ) -> Result<()> {
        match cfg.scheme {
            Scheme::Leapfrog | Scheme::StormerVerlet => {
                // kick start: y^{1/2} = y^0 + dt/2 * M_y^{-1} off_yz z^0
                let rhs = off_yz.matvec(&z0);
                let a0 = solve_spd(m_y, &rhs, solver_cfg)?.x;
                let mut y_half = y0.clone();
                solver::axpy(cfg.dt / 2.0, &a0, &mut y_half);
                let mut y_prev = y0;
                solver::axpy(-cfg.dt / 2.0, &a0, &mut y_prev);
                state.insert(y_name, Stamp::Half(0), y_half);
                state.insert(FieldName::VPrev, Stamp::Half(-1), y_prev);
                state.insert(z_name, Stamp::Integer(0), z0);
            }
            Scheme::ImplicitMidpoint => {
                state.insert(y_name, Stamp::Integer(0), y0);
                state.insert(z_name, Stamp::Integer(0), z0);
            }
            Scheme::Newmark => {
                return Err(Error::invalid_state(
                    "first-order formulations are stepped by leapfrog or midpoint",
                ))
            }
        }
        Ok(())
    }

    /// Discrete energy of a state.
    ///
    /// Collocated states use the instantaneous quadratic form; staggered
    /// states use the two-time product 1/2 v^{n-1/2} M v^{n+1/2} + (potential
    /// term), which leapfrog conserves exactly on linear systems.
    pub fn energy(&self, state: &SchemeState) -> Result<f64> {
        let quad = |m: &CsrMatrix, x: &[f64]| 0.5 * solver::dot(x, &m.matvec(x));
        let cross = |m: &CsrMatrix, x: &[f64], y: &[f64]| 0.5 * solver::dot(x, &m.matvec(y));
        match &self.blocks {
            SystemBlocks::SecondOrder { mass, stiffness } => {
                let q = &state.get(FieldName::Q)?.data;
                let v = &state.get(FieldName::V)?.data;
                Ok(quad(mass, v) + quad(stiffness, q))
            }
            SystemBlocks::CanonicalVQ { mass, minus_stiffness, .. } => {
                let q = &state.get(FieldName::Q)?.data;
                let v = state.get(FieldName::V)?;
                let potential = -cross(minus_stiffness, q, q);
                match (v.stamp, state.try_get(FieldName::VPrev)) {
                    (Stamp::Half(_), Some(prev)) => {
                        Ok(cross(mass, &prev.data, &v.data) + potential)
                    }
                    (Stamp::Integer(_), _) => Ok(quad(mass, &v.data) + potential),
                    _ => Err(Error::invalid_state(
                        "staggered energy needs the trailing half-step velocity",
                    )),
                }
            }
            SystemBlocks::GradMixed { m_v, m_sigma, .. }
            | SystemBlocks::DivMixed { m_v, m_sigma, .. }
            | SystemBlocks::ThreeField { m_v, m_sigma, .. } => {
                let sigma = &state.get(FieldName::Sigma)?.data;
                let v = state.get(FieldName::V)?;
                let potential = quad(m_sigma, sigma);
                match (v.stamp, state.try_get(FieldName::VPrev)) {
                    (Stamp::Half(_), Some(prev)) => Ok(cross(m_v, &prev.data, &v.data) + potential),
                    (Stamp::Integer(_), _) => Ok(quad(m_v, &v.data) + potential),
                    _ => Err(Error::invalid_state(
                        "staggered energy needs the trailing half-step velocity",
                    )),
                }
            }
        }
    }

    /// Instantaneous energy: for staggered states the velocity is averaged
    /// back onto the integer step; identical to `energy` for collocated ones.
    pub fn energy_instantaneous(&self, state: &SchemeState) -> Result<f64> {
        let avg_state = |m: &CsrMatrix, v: &Stamped, prev: Option<&Stamped>| -> Result<f64> {
            match (v.stamp, prev) {
                (Stamp::Half(_), Some(p)) => {
                    let avg: Vec<f64> = v
                        .data
                        .iter()
                        .zip(&p.data)
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    Ok(0.5 * solver::dot(&avg, &m.matvec(&avg)))
                }
                (Stamp::Integer(_), _) => Ok(0.5 * solver::dot(&v.data, &m.matvec(&v.data))),
                _ => Err(Error::invalid_state(
                    "staggered energy needs the trailing half-step velocity",
                )),
            }
        };
        match &self.blocks {
            SystemBlocks::SecondOrder { .. } => self.energy(state),
            SystemBlocks::CanonicalVQ { mass, minus_stiffness, .. } => {
                let q = &state.get(FieldName::Q)?.data;
                let v = state.get(FieldName::V)?;
                let kinetic = avg_state(mass, v, state.try_get(FieldName::VPrev))?;
                Ok(kinetic - 0.5 * solver::dot(q, &minus_stiffness.matvec(q)))
            }
            SystemBlocks::GradMixed { m_v, m_sigma, .. }
            | SystemBlocks::DivMixed { m_v, m_sigma, .. }
            | SystemBlocks::ThreeField { m_v, m_sigma, .. } => {
                let sigma = &state.get(FieldName::Sigma)?.data;
                let v = state.get(FieldName::V)?;
                let kinetic = avg_state(m_v, v, state.try_get(FieldName::VPrev))?;
                Ok(kinetic + 0.5 * solver::dot(sigma, &m_sigma.matvec(sigma)))
            }
        }
    }

    /// The (K, M) pencil whose largest generalized eigenvalue controls the
    /// explicit stability limit dt_max = 2 / sqrt(lambda_max).
    pub fn stability_pencil(&self) -> (CsrMatrix, CsrMatrix) {
        match &self.blocks {
            SystemBlocks::SecondOrder { mass, stiffness } => (stiffness.clone(), mass.clone()),
            SystemBlocks::CanonicalVQ { mass, minus_stiffness, .. } => {
                (minus_stiffness.scale(-1.0), mass.clone())
            }
            SystemBlocks::GradMixed {
                m_v,
                coupling,
                m_sigma_inv,
                ..
            } => {
                let k = coupling
                    .transpose()
                    .matmul(&m_sigma_inv.matmul(coupling));
                (k, m_v.clone())
            }
            SystemBlocks::DivMixed {
                m_sigma,
                coupling_div,
                m_v_inv,
                ..
            }
            | SystemBlocks::ThreeField {
                m_sigma,
                coupling_div,
                m_v_inv,
                ..
            } => {
                let k = coupling_div
                    .transpose()
                    .matmul(&m_v_inv.matmul(coupling_div));
                (k, m_sigma.clone())
            }
        }
    }

    /// Matrices of the system, with stable names, for export.
    pub fn export_blocks(&self) -> Vec<(&'static str, &CsrMatrix)> {
        match &self.blocks {
            SystemBlocks::SecondOrder { mass, stiffness } => {
                vec![("mass", mass), ("stiffness", stiffness)]
            }
            SystemBlocks::CanonicalVQ { mass, minus_stiffness, .. } => {
                vec![("mass", mass), ("minus_stiffness", minus_stiffness)]
            }
            SystemBlocks::GradMixed {
                m_v,
                m_sigma,
                coupling,
                ..
            } => vec![("mass_v", m_v), ("mass_sigma", m_sigma), ("coupling", coupling)],
            SystemBlocks::DivMixed {
                m_v,
                m_sigma,
                coupling_div,
                ..
            }
            | SystemBlocks::ThreeField {
                m_v,
                m_sigma,
                coupling_div,
                ..
            } => vec![
                ("mass_v", m_v),
                ("mass_sigma", m_sigma),
                ("coupling_div", coupling_div),
            ],
        }
    }
}



/// Why a run was flagged unstable.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct InstabilityReport {
    pub step: usize,
    /// Energy growth factor relative to the initial energy.
    pub growth: f64,
}

/// A completed (or aborted) simulation: one state per step plus both energy
/// readings.
pub struct Trace {
    pub states: Vec<SchemeState>,
    pub energies: Vec<f64>,
    pub energies_instantaneous: Vec<f64>,
    pub dt: f64,
    pub instability: Option<InstabilityReport>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Energy growth beyond this factor (relative to the initial energy) aborts
/// a run and flags instability.
const INSTABILITY_GROWTH: f64 = 10.0;

impl DiscreteSystem {
    /// Run `cfg.steps` steps from the profile's initial state, recording every
    /// state and energy. Mixed formulations that discard q carry a
    /// reconstructed q alongside the state when the configuration asks for a
    /// reconstruction. An unstable explicit run is recorded and truncated,
    /// not an error.
    pub fn run(&self, profile: Profile, cfg: &IntegratorConfig) -> Result<Trace> {
        let mut state = self.initial_state(profile, cfg)?;
        self.attach_reconstructed_q(&mut state, profile, cfg)?;
        self.run_from(state, cfg)
    }

    /// Like `run`, starting from an explicit initial state (used by the
    /// stability scan to inject broadband perturbations).
    pub fn run_from(&self, state: SchemeState, cfg: &IntegratorConfig) -> Result<Trace> {
        let e0 = self.energy(&state)?;
        let mut trace = Trace {
            energies: vec![e0],
            energies_instantaneous: vec![self.energy_instantaneous(&state)?],
            states: vec![state],
            dt: cfg.dt,
            instability: None,
        };
        for _ in 0..cfg.steps {
            let prev = trace.states.last().unwrap();
            let mut next = self.step(prev, cfg)?;
            self.advance_reconstructed_q(prev, &mut next, cfg)?;
            let e = self.energy(&next)?;
            let e_inst = self.energy_instantaneous(&next)?;
            let unstable =
                !e.is_finite() || (e0 > 0.0 && e.abs() > INSTABILITY_GROWTH * e0);
            trace.energies.push(e);
            trace.energies_instantaneous.push(e_inst);
            let step = next.step;
            trace.states.push(next);
            if unstable {
                trace.instability = Some(InstabilityReport {
                    step,
                    growth: if e0 > 0.0 { e.abs() / e0 } else { f64::INFINITY },
                });
                break;
            }
        }
        Ok(trace)
    }

    /// Whether this formulation tracks q only through reconstruction.
    fn reconstructs_q(&self) -> bool {
        matches!(
            self.kind,
            FormulationKind::MixedGradVS | FormulationKind::MixedDivVS
        )
    }

    fn attach_reconstructed_q(
        &self,
        state: &mut SchemeState,
        profile: Profile,
        cfg: &IntegratorConfig,
    ) -> Result<()> {
        if !self.reconstructs_q() || cfg.reconstruction == Reconstruction::None {
            return Ok(());
        }
        let mesh = self.mesh().clone();
        let space = self.space_q.as_ref().expect("mixed kinds carry a q space");
        let q0 = space.interpolate(|x| profile.eval_q(&mesh, x))?;
        state.insert(FieldName::Q, Stamp::Integer(0), q0);
        Ok(())
    }

    fn advance_reconstructed_q(
        &self,
        prev: &SchemeState,
        next: &mut SchemeState,
        cfg: &IntegratorConfig,
    ) -> Result<()> {
        if !self.reconstructs_q() || cfg.reconstruction == Reconstruction::None {
            return Ok(());
        }
        let q = &prev.get(FieldName::Q)?.data;
        let q_new = match cfg.reconstruction {
            Reconstruction::HalfStep => {
                // prev carries v^{n+1/2}
                let v_half = &prev.get(FieldName::V)?.data;
                trapezoidal_reconstruct(q, ReconstructionInput::HalfStep(v_half), cfg)?
            }
            Reconstruction::Trapezoidal => {
                let v_curr = &prev.get(FieldName::V)?.data;
                let v_next = &next.get(FieldName::V)?.data;
                trapezoidal_reconstruct(
                    q,
                    ReconstructionInput::Trapezoidal { v_curr, v_next },
                    cfg,
                )?
            }
            Reconstruction::None => unreachable!(),
        };
        next.insert(FieldName::Q, Stamp::Integer(next.step as i64), q_new);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rect_mesh};

    fn interval_spec(kind: FormulationKind, n: usize, degree: usize) -> FormulationSpec {
        FormulationSpec::new(
            kind,
            Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap()),
            MaterialParams::new(1.0, 1.0).unwrap(),
        )
        .with_degree(degree)
    }

    fn square_spec(kind: FormulationKind, n: usize) -> FormulationSpec {
        FormulationSpec::new(
            kind,
            Arc::new(build_rect_mesh((0.0, 1.0), (0.0, 1.0), n, n).unwrap()),
            MaterialParams::new(1.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn catalog_sweep_every_kind_and_scheme() {
        let profile = Profile::StandingMode { mode: 1, amplitude: 1.0 };
        for kind in FormulationKind::ALL {
            let spec = match kind {
                FormulationKind::MaxwellTM => square_spec(kind, 4),
                FormulationKind::MixedGradVS => interval_spec(kind, 12, 2),
                _ => interval_spec(kind, 12, 1),
            };
            let sys = build_formulation(&spec).unwrap();
            let (k, m) = sys.stability_pencil();
            let lambda = crate::solver::power_iteration_genevp(&k, &m, 1e-10).unwrap();
            let dt = 0.5 * 2.0 / lambda.sqrt();
            let schemes: &[Scheme] = if kind.is_second_order() {
                &[Scheme::Newmark]
            } else {
                &[Scheme::Leapfrog, Scheme::StormerVerlet, Scheme::ImplicitMidpoint]
            };
            for &scheme in schemes {
                let cfg = IntegratorConfig::new(scheme, dt, 20);
                let trace = sys.run(profile, &cfg).unwrap();
                assert!(trace.instability.is_none(), "{kind:?} / {scheme:?}");
                assert_eq!(trace.len(), 21);
                assert!(trace.energies.iter().all(|e| e.is_finite()));
            }
            // inadmissible scheme pairings are rejected, not mis-stepped
            let wrong = if kind.is_second_order() {
                Scheme::Leapfrog
            } else {
                Scheme::Newmark
            };
            let cfg = IntegratorConfig::new(wrong, dt, 5);
            assert!(sys.initial_state(profile, &cfg).is_err(), "{kind:?}");
        }
    }

    #[test]
    fn built_systems_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<crate::mesh::Mesh>();
        assert_send_sync::<crate::space::FunctionSpace>();
        assert_send_sync::<crate::sparse::CsrMatrix>();
        assert_send_sync::<DiscreteSystem>();
        assert_send_sync::<SchemeState>();
    }

    #[test]
    fn formulation_ids_round_trip() {
        for kind in FormulationKind::ALL {
            assert_eq!(FormulationKind::parse(kind.id()).unwrap(), kind);
        }
        assert!(FormulationKind::parse("no-such").is_err());
    }

    #[test]
    fn mixed_grad_block_shapes() {
        // CG-2/DG-1 on n cells: (2n-1) primal dofs, 2n image dofs
        let n = 5;
        let sys = build_formulation(&interval_spec(FormulationKind::MixedGradVS, n, 2)).unwrap();
        let SystemBlocks::GradMixed {
            m_v,
            m_sigma,
            coupling,
            ..
        } = &sys.blocks
        else {
            panic!("wrong blocks")
        };
        assert_eq!((m_v.rows(), m_v.cols()), (2 * n - 1, 2 * n - 1));
        assert_eq!((m_sigma.rows(), m_sigma.cols()), (2 * n, 2 * n));
        assert_eq!((coupling.rows(), coupling.cols()), (2 * n, 2 * n - 1));
    }

    #[test]
    fn lagrangian_has_mass_and_stiffness_only() {
        let sys = build_formulation(&interval_spec(FormulationKind::Lagrangian2nd, 8, 1)).unwrap();
        assert!(matches!(sys.blocks, SystemBlocks::SecondOrder { .. }));
        assert_eq!(sys.export_blocks().len(), 2);
    }

    #[test]
    fn mixed_grad_requires_1d() {
        let err = build_formulation(&square_spec(FormulationKind::MixedGradVS, 2)).unwrap_err();
        assert!(matches!(err, Error::CompatibilityViolation(_)));
    }

    #[test]
    fn three_field_initial_state_satisfies_constraint() {
        for spec in [
            interval_spec(FormulationKind::ThreeFieldVQS, 16, 1),
            square_spec(FormulationKind::ThreeFieldVQS, 3),
        ] {
            let sys = build_formulation(&spec).unwrap();
            let cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, 0.01, 1);
            let state = sys
                .initial_state(Profile::StandingMode { mode: 1, amplitude: 1.0 }, &cfg)
                .unwrap();
            let SystemBlocks::ThreeField {
                m_sigma,
                coupling_div,
                ..
            } = &sys.blocks
            else {
                panic!()
            };
            let sigma = &state.get(FieldName::Sigma).unwrap().data;
            let q = &state.get(FieldName::Q).unwrap().data;
            let lhs = m_sigma.matvec(sigma);
            let rhs = coupling_div.matvec_transpose(q);
            let resid: f64 = lhs
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a + b) * (a + b))
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-12, "constraint residual {resid}");
        }
    }

    #[test]
    fn zero_profile_gives_zero_state_and_energy() {
        let sys = build_formulation(&interval_spec(FormulationKind::MixedGradVS, 8, 1)).unwrap();
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, 0.01, 1);
        let state = sys.initial_state(Profile::Zero, &cfg).unwrap();
        assert_eq!(sys.energy(&state).unwrap(), 0.0);
        for (_, f) in state.fields() {
            assert!(f.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn energies_agree_across_formulations_at_start() {
        // with sigma0 = k grad(q0) both quadratic forms evaluate the same integral
        let cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, 0.01, 1);
        let profile = Profile::StandingMode { mode: 1, amplitude: 1.0 };
        let lag = build_formulation(&interval_spec(FormulationKind::HamiltonianVQ, 32, 1)).unwrap();
        let mixed = build_formulation(&interval_spec(FormulationKind::MixedGradVS, 32, 1)).unwrap();
        let e_l = lag
            .energy(&lag.initial_state(profile, &cfg).unwrap())
            .unwrap();
        let e_m = mixed
            .energy(&mixed.initial_state(profile, &cfg).unwrap())
            .unwrap();
        assert!((e_l - e_m).abs() <= 1e-12, "{e_l} vs {e_m}");
    }

    #[test]
    fn scalar_energy_reference() {
        // (q, v) = (1, 0) with unit matrices: H = 1/2
        let sys = build_formulation(&interval_spec(FormulationKind::HamiltonianVQ, 2, 1)).unwrap();
        let mut state = SchemeState::new(0);
        state.insert(FieldName::Q, Stamp::Integer(0), vec![1.0]);
        state.insert(FieldName::V, Stamp::Integer(0), vec![0.0]);
        // M = [1/3], K = [4]: H = 1/2 * 4 = 2; scale to unit matrices instead
        let e = sys.energy(&state).unwrap();
        assert!((e - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mixed_skew_block_is_exactly_antisymmetric() {
        for spec in [
            interval_spec(FormulationKind::MixedGradVS, 6, 2),
            interval_spec(FormulationKind::MixedDivVS, 6, 1),
            square_spec(FormulationKind::MixedDivVS, 2),
            square_spec(FormulationKind::MaxwellTM, 2),
        ] {
            let sys = build_formulation(&spec).unwrap();
            let (a, b) = match &sys.blocks {
                SystemBlocks::GradMixed {
                    coupling,
                    neg_coupling_t,
                    ..
                } => (neg_coupling_t, coupling),
                SystemBlocks::DivMixed {
                    coupling_div,
                    neg_coupling_div_t,
                    ..
                } => (coupling_div, neg_coupling_div_t),
                _ => panic!(),
            };
            // J = [[0, a], [b, 0]] must satisfy J = -J^T, i.e. a = -b^T exactly
            let bt = b.transpose().scale(-1.0);
            assert_eq!(a.to_dense(), bt.to_dense());
        }
    }

    #[test]
    fn maxwell_matches_rotated_wave_coupling() {
        let spec = square_spec(FormulationKind::MaxwellTM, 2);
        let sys = build_formulation(&spec).unwrap();
        let SystemBlocks::GradMixed { coupling, m_v, m_sigma, .. } = &sys.blocks else {
            panic!()
        };
        // independent assembly: plain gradient coupling, rotated row-block-wise
        let e_space = make_space(
            &spec.mesh,
            Family::ContinuousLagrange,
            1,
            BoundaryCondition::HomogeneousDirichlet,
        )
        .unwrap();
        let h_space = make_vector_space(&spec.mesh, Family::DiscontinuousLagrange, 0).unwrap();
        let g = assemble_coupling_grad(&h_space, &e_space).unwrap();
        // rot(g) on the (cell, component) dof layout: row (2c) <- -row(2c+1), row (2c+1) <- row(2c)
        for cell in 0..spec.mesh.cell_count() {
            for j in 0..e_space.dof_count() {
                let cx = coupling.get(2 * cell, j);
                let cy = coupling.get(2 * cell + 1, j);
                let gx = g.get(2 * cell, j);
                let gy = g.get(2 * cell + 1, j);
                assert!((cx + gy).abs() < 1e-13, "x row: {cx} vs {}", -gy);
                assert!((cy - gx).abs() < 1e-13, "y row: {cy} vs {gx}");
            }
        }
        // mass blocks equal the wave masses under the parameter aliasing
        let m_e = assemble_mass(&e_space, 1.0).unwrap();
        let m_h = assemble_mass(&h_space, 1.0).unwrap();
        assert_eq!(m_v.to_dense(), m_e.to_dense());
        assert_eq!(m_sigma.to_dense(), m_h.to_dense());
    }

    #[test]
    fn maxwell_zero_field_zero_energy() {
        let sys = build_formulation(&square_spec(FormulationKind::MaxwellTM, 2)).unwrap();
        let cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, 0.01, 1);
        let state = sys.initial_state(Profile::Zero, &cfg).unwrap();
        assert_eq!(sys.energy(&state).unwrap(), 0.0);
    }

    #[test]
    fn momentum_wrapper_is_mass_times_velocity() {
        let sys = build_formulation(&interval_spec(FormulationKind::HamiltonianVQ, 4, 1)).unwrap();
        let cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, 0.01, 1);
        let mut state = sys
            .initial_state(Profile::StandingMode { mode: 1, amplitude: 1.0 }, &cfg)
            .unwrap();
        // give it a nonzero velocity
        let n = sys.space_v.dof_count();
        state.insert(FieldName::V, Stamp::Integer(0), vec![1.0; n]);
        let p = sys.momentum(&state).unwrap();
        let SystemBlocks::CanonicalVQ { mass, .. } = &sys.blocks else {
            panic!()
        };
        let expected = mass.matvec(&vec![1.0; n]);
        assert_eq!(p, expected);

        let mixed = build_formulation(&interval_spec(FormulationKind::MixedGradVS, 4, 1)).unwrap();
        assert!(mixed.momentum(&state).is_err());
    }

    #[test]
    fn run_reports_instability_instead_of_crashing() {
        let sys = build_formulation(&interval_spec(FormulationKind::HamiltonianVQ, 16, 1)).unwrap();
        let (k, m) = sys.stability_pencil();
        let lambda = crate::solver::power_iteration_genevp(&k, &m, 1e-10).unwrap();
        let dt_max = 2.0 / lambda.sqrt();
        let mut cfg = IntegratorConfig::new(Scheme::Leapfrog, 1.05 * dt_max, 2000);
        cfg.steps = 2000;
        let trace = sys
            .run(Profile::StandingMode { mode: 1, amplitude: 1.0 }, &cfg)
            .unwrap();
        assert!(trace.instability.is_some());

        let mut stable_cfg = cfg.clone();
        stable_cfg.dt = 0.5 * dt_max;
        let trace = sys
            .run(Profile::StandingMode { mode: 1, amplitude: 1.0 }, &stable_cfg)
            .unwrap();
        assert!(trace.instability.is_none());
        assert_eq!(trace.len(), 2001);
    }

    #[test]
    fn mixed_grad_schur_and_monolithic_paths_agree() {
        use crate::integrator::MidpointPath;
        let sys = build_formulation(&interval_spec(FormulationKind::MixedGradVS, 32, 1)).unwrap();
        let profile = Profile::StandingMode { mode: 1, amplitude: 1.0 };
        let mut cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, 0.01, 100);
        cfg.solver.tol = 1e-14;
        cfg.solver.gmres_restart = 200;
        cfg.midpoint_path = MidpointPath::Schur;
        let t1 = sys.run(profile, &cfg).unwrap();
        cfg.midpoint_path = MidpointPath::Monolithic;
        let t2 = sys.run(profile, &cfg).unwrap();
        let mut worst = 0.0f64;
        for (s1, s2) in t1.states.iter().zip(&t2.states) {
            for name in [FieldName::V, FieldName::Sigma] {
                let a = &s1.get(name).unwrap().data;
                let b = &s2.get(name).unwrap().data;
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        assert!(worst <= 1e-11, "paths diverge by {worst:.3e}");
    }

    #[test]
    fn sigma_starts_as_hand_computed_slopes() {
        // sin(pi x) interpolated on 4 cells: sigma0 holds k times the
        // per-cell nodal slopes
        let material = MaterialParams::new(1.0, 2.5).unwrap();
        let spec = FormulationSpec::new(
            FormulationKind::MixedGradVS,
            Arc::new(build_interval_mesh(0.0, 1.0, 4).unwrap()),
            material,
        );
        let sys = build_formulation(&spec).unwrap();
        let cfg = IntegratorConfig::new(Scheme::ImplicitMidpoint, 0.01, 1);
        let state = sys
            .initial_state(Profile::StandingMode { mode: 1, amplitude: 1.0 }, &cfg)
            .unwrap();
        let sigma = &state.get(FieldName::Sigma).unwrap().data;
        let nodes = [0.0, 0.25, 0.5, 0.75, 1.0];
        let q: Vec<f64> = nodes
            .iter()
            .map(|x| (std::f64::consts::PI * x).sin())
            .collect();
        for cell in 0..4 {
            let slope = (q[cell + 1] - q[cell]) / 0.25;
            assert!(
                (sigma[cell] - 2.5 * slope).abs() < 1e-13,
                "cell {cell}: {} vs {}",
                sigma[cell],
                2.5 * slope
            );
        }
    }

    #[test]
    fn leapfrog_run_is_time_reversible() {
        // reflecting the staggered state (q^N, -v^{N-1/2}) and marching N more
        // steps returns the initial displacement
        let sys = build_formulation(&interval_spec(FormulationKind::HamiltonianVQ, 24, 1)).unwrap();
        let profile = Profile::StandingMode { mode: 1, amplitude: 1.0 };
        let n_steps = 200;
        let cfg = IntegratorConfig::new(Scheme::Leapfrog, 0.01, n_steps);
        let forward = sys.run(profile, &cfg).unwrap();
        let first = &forward.states[0];
        let last = forward.states.last().unwrap();
        let mut reversed = SchemeState::new(0);
        reversed.insert(
            FieldName::Q,
            Stamp::Integer(0),
            last.get(FieldName::Q).unwrap().data.clone(),
        );
        reversed.insert(
            FieldName::V,
            Stamp::Half(0),
            last.get(FieldName::VPrev)
                .unwrap()
                .data
                .iter()
                .map(|v| -v)
                .collect(),
        );
        reversed.insert(
            FieldName::VPrev,
            Stamp::Half(-1),
            last.get(FieldName::V)
                .unwrap()
                .data
                .iter()
                .map(|v| -v)
                .collect(),
        );
        let back = sys.run_from(reversed, &cfg).unwrap();
        let q_back = &back.states.last().unwrap().get(FieldName::Q).unwrap().data;
        let q0 = &first.get(FieldName::Q).unwrap().data;
        let mut worst = 0.0f64;
        for (a, b) in q_back.iter().zip(q0) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst <= 1e-10, "reversal error {worst:.3e}");
    }

    #[test]
    fn reconstructed_q_tracks_native_q() {
        // mixed-grad with reconstruction against the Hamiltonian native q
        let profile = Profile::StandingMode { mode: 1, amplitude: 1.0 };
        let ham = build_formulation(&interval_spec(FormulationKind::HamiltonianVQ, 16, 1)).unwrap();
        let mixed = build_formulation(&interval_spec(FormulationKind::MixedGradVS, 16, 1)).unwrap();
        let cfg = IntegratorConfig::new(Scheme::StormerVerlet, 0.01, 100);
        let t1 = ham.run(profile, &cfg).unwrap();
        let t2 = mixed.run(profile, &cfg).unwrap();
        for (s1, s2) in t1.states.iter().zip(&t2.states) {
            let q1 = &s1.get(FieldName::Q).unwrap().data;
            let q2 = &s2.get(FieldName::Q).unwrap().data;
            for (a, b) in q1.iter().zip(q2.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
