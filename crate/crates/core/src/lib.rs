//! A small finite element laboratory for linear wave phenomena.
//!
//! The crate assembles the Lagrangian (continuous Galerkin), symplectic
//! Hamiltonian and mixed (velocity-stress) discretizations of the wave
//! equation, plus a transverse-mode electromagnetic adapter, steps them with
//! the Newmark family, the staggered leapfrog and the implicit midpoint rule,
//! and verifies numerically that the resulting schemes are algebraically
//! equivalent when the finite element spaces are compatible and the discarded
//! primal variable is reconstructed with the trapezoidal rule.
//!
//! Module map:
//! - [`mesh`], [`space`], [`quadrature`]: geometry, elements, DOF maps
//! - [`assembly`]: mass/stiffness/coupling matrices
//! - [`sparse`], [`solver`]: CSR storage, CG/GMRES/banded Cholesky, the
//!   generalized eigensolver for stability limits
//! - [`integrator`]: stepping kernels and reconstruction
//! - [`formulation`]: the formulation catalog bound to matrices and energies
//! - [`verification`]: equivalence checks, energy audits, CFL scans,
//!   convergence studies
//! - [`config`], [`report`], [`cli`]: the batch front door

pub mod assembly;
pub mod cli;
pub mod config;
pub mod error;
pub mod formulation;
pub mod integrator;
pub mod mesh;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod space;
pub mod sparse;
pub mod verification;

pub use error::{Error, Result};
