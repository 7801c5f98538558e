//! Global matrix assembly: mass matrices, grad-grad and div-div stiffness,
//! and the mixed coupling pairings between a primal space and an L2 space.
//!
//! Physical coefficients are scalars by construction; all bilinear forms here
//! assume constant coefficients. Dirichlet conditions are imposed by DOF
//! elimination (the spaces drop boundary DOFs from the global numbering), so
//! assembled matrices stay symmetric positive definite where expected.
//! Cell contributions are accumulated in cell order, which makes repeated
//! assembly bit-reproducible.

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, triangle_degree4, QuadratureRule};
use crate::space::{Family, FunctionSpace};
use crate::sparse::{CooBuilder, CsrMatrix};

/// Density and stiffness of the medium, with the derived compliance and
/// specific volume. The electromagnetic parameters map onto the same pair:
/// permittivity plays the density role and permeability the compliance role.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MaterialParams {
    pub rho: f64,
    pub k_stiff: f64,
}

impl MaterialParams {
    pub fn new(rho: f64, k_stiff: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite() && k_stiff > 0.0 && k_stiff.is_finite()) {
            return Err(Error::invalid_argument(
                "material parameters must be positive and finite",
            ));
        }
        Ok(MaterialParams { rho, k_stiff })
    }

    /// Electromagnetic alias: epsilon <-> rho, mu <-> compliance.
    pub fn from_em(epsilon: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid_argument("permeability must be positive"));
        }
        Self::new(epsilon, 1.0 / mu)
    }

    /// c = 1/k.
    pub fn compliance(&self) -> f64 {
        1.0 / self.k_stiff
    }

    /// nu = 1/rho.
    pub fn specific_volume(&self) -> f64 {
        1.0 / self.rho
    }
}

fn assembly_rule(space_a: &FunctionSpace, space_b: &FunctionSpace) -> Result<QuadratureRule> {
    match space_a.mesh().dim() {
        1 => {
            let k = space_a.degree().max(space_b.degree());
            gauss_legendre(2 * k + 1)
        }
        _ => Ok(triangle_degree4()),
    }
}

fn check_same_mesh(a: &FunctionSpace, b: &FunctionSpace) -> Result<()> {
    if !std::sync::Arc::ptr_eq(a.mesh(), b.mesh()) {
        return Err(Error::compatibility(
            "spaces must be built on the same mesh",
        ));
    }
    Ok(())
}

/// Mass matrix: entry (i, j) = coeff * int phi_i . phi_j.
pub fn assemble_mass(space: &FunctionSpace, coeff: f64) -> Result<CsrMatrix> {
    if !(coeff > 0.0 && coeff.is_finite()) {
        return Err(Error::invalid_argument(
            "mass coefficient must be positive and finite",
        ));
    }
    let rule = assembly_rule(space, space)?;
    let n = space.dof_count();
    let mut builder = CooBuilder::new(n, n);
    for cell in 0..space.cell_count() {
        let tab = space.tabulate(cell, &rule.points);
        let scale = space.mesh().jacobian_det(cell);
        let dofs = space.cell_dofs(cell);
        for (q, w) in rule.weights.iter().enumerate() {
            let wq = coeff * w * scale;
            for (i, di) in dofs.iter().enumerate() {
                let Some(gi) = di else { continue };
                let vi = tab.values[q][i];
                for (j, dj) in dofs.iter().enumerate() {
                    let Some(gj) = dj else { continue };
                    let vj = tab.values[q][j];
                    builder.push(*gi, *gj, wq * (vi[0] * vj[0] + vi[1] * vj[1]));
                }
            }
        }
    }
    Ok(builder.finalize())
}

/// Stiffness matrix of the grad-grad form: coeff * int grad(phi_i) . grad(phi_j).
pub fn assemble_stiffness_grad(space: &FunctionSpace, coeff: f64) -> Result<CsrMatrix> {
    if !space.supports_gradient() {
        return Err(Error::unsupported_space(
            "grad-grad stiffness needs a continuous Lagrange space",
        ));
    }
    if !(coeff > 0.0 && coeff.is_finite()) {
        return Err(Error::invalid_argument(
            "stiffness coefficient must be positive and finite",
        ));
    }
    let rule = assembly_rule(space, space)?;
    let n = space.dof_count();
    let mut builder = CooBuilder::new(n, n);
    for cell in 0..space.cell_count() {
        let tab = space.tabulate(cell, &rule.points);
        let grads = tab.gradients.as_ref().expect("gradients for CG space");
        let scale = space.mesh().jacobian_det(cell);
        let dofs = space.cell_dofs(cell);
        for (q, w) in rule.weights.iter().enumerate() {
            let wq = coeff * w * scale;
            for (i, di) in dofs.iter().enumerate() {
                let Some(gi) = di else { continue };
                let gi_v = grads[q][i];
                for (j, dj) in dofs.iter().enumerate() {
                    let Some(gj) = dj else { continue };
                    let gj_v = grads[q][j];
                    builder.push(*gi, *gj, wq * (gi_v[0] * gj_v[0] + gi_v[1] * gj_v[1]));
                }
            }
        }
    }
    Ok(builder.finalize())
}

/// Stiffness matrix of the div-div form: coeff * int div(phi_i) div(phi_j).
pub fn assemble_stiffness_div(space: &FunctionSpace, coeff: f64) -> Result<CsrMatrix> {
    if !space.supports_divergence() {
        return Err(Error::unsupported_space(
            "div-div stiffness needs an H(div)-conforming space",
        ));
    }
    if !(coeff > 0.0 && coeff.is_finite()) {
        return Err(Error::invalid_argument(
            "stiffness coefficient must be positive and finite",
        ));
    }
    let rule = assembly_rule(space, space)?;
    let n = space.dof_count();
    let mut builder = CooBuilder::new(n, n);
    for cell in 0..space.cell_count() {
        let tab = space.tabulate(cell, &rule.points);
        let divs = tab.divergences.as_ref().expect("divergences for div space");
        let scale = space.mesh().jacobian_det(cell);
        let dofs = space.cell_dofs(cell);
        for (q, w) in rule.weights.iter().enumerate() {
            let wq = coeff * w * scale;
            for (i, di) in dofs.iter().enumerate() {
                let Some(gi) = di else { continue };
                for (j, dj) in dofs.iter().enumerate() {
                    let Some(gj) = dj else { continue };
                    builder.push(*gi, *gj, wq * divs[q][i] * divs[q][j]);
                }
            }
        }
    }
    Ok(builder.finalize())
}

/// Rotate a 2D vector by +90 degrees; the identity in 1D.
fn rotate(dim: usize, v: [f64; 2]) -> [f64; 2] {
    if dim == 2 {
        [-v[1], v[0]]
    } else {
        v
    }
}

fn coupling_grad_impl(
    test_space: &FunctionSpace,
    trial_space: &FunctionSpace,
    rotated: bool,
) -> Result<CsrMatrix> {
    check_same_mesh(test_space, trial_space)?;
    if !trial_space.supports_gradient() {
        return Err(Error::compatibility(
            "grad coupling needs a continuous Lagrange trial space",
        ));
    }
    let dim = trial_space.mesh().dim();
    let grad_components = if dim == 1 { 1 } else { 2 };
    if test_space.components() != grad_components {
        return Err(Error::compatibility(format!(
            "test space has {} components but gradients have {grad_components}",
            test_space.components()
        )));
    }
    let rule = assembly_rule(test_space, trial_space)?;
    let mut builder = CooBuilder::new(test_space.dof_count(), trial_space.dof_count());
    for cell in 0..trial_space.cell_count() {
        let test_tab = test_space.tabulate(cell, &rule.points);
        let trial_tab = trial_space.tabulate(cell, &rule.points);
        let grads = trial_tab.gradients.as_ref().expect("gradients");
        let scale = trial_space.mesh().jacobian_det(cell);
        let test_dofs = test_space.cell_dofs(cell);
        let trial_dofs = trial_space.cell_dofs(cell);
        for (q, w) in rule.weights.iter().enumerate() {
            let wq = w * scale;
            for (e, de) in test_dofs.iter().enumerate() {
                let Some(ge) = de else { continue };
                let xi = test_tab.values[q][e];
                for (j, dj) in trial_dofs.iter().enumerate() {
                    let Some(gj) = dj else { continue };
                    let g = if rotated {
                        rotate(dim, grads[q][j])
                    } else {
                        grads[q][j]
                    };
                    builder.push(*ge, *gj, wq * (xi[0] * g[0] + xi[1] * g[1]));
                }
            }
        }
    }
    Ok(builder.finalize())
}

/// Coupling G(e, j) = int xi_e . grad(psi_j).
///
/// When `test_space` is the derivative space of `trial_space` the product
/// M_W^{-1} G maps trial coefficients to the exact expansion coefficients of
/// the gradient. Any L2 test space with matching value shape on the same mesh
/// is accepted, which is what the discrete integration-by-parts identity
/// between the grad and div pairings requires.
pub fn assemble_coupling_grad(
    test_space: &FunctionSpace,
    trial_space: &FunctionSpace,
) -> Result<CsrMatrix> {
    coupling_grad_impl(test_space, trial_space, false)
}

/// Rotated-gradient coupling C(e, j) = int xi_e . rot(grad psi_j), the scalar
/// curl pairing used by the transverse-mode electromagnetic adapter.
pub fn assemble_coupling_curl(
    test_space: &FunctionSpace,
    trial_space: &FunctionSpace,
) -> Result<CsrMatrix> {
    if trial_space.mesh().dim() != 2 {
        return Err(Error::compatibility("curl coupling is two-dimensional"));
    }
    coupling_grad_impl(test_space, trial_space, true)
}

/// Coupling D(i, e) = int psi_i div(xi_e).
pub fn assemble_coupling_div(
    test_space: &FunctionSpace,
    trial_space: &FunctionSpace,
) -> Result<CsrMatrix> {
    check_same_mesh(test_space, trial_space)?;
    if !trial_space.supports_divergence() {
        return Err(Error::compatibility(
            "div coupling needs an H(div)-conforming trial space",
        ));
    }
    if test_space.components() != 1 {
        return Err(Error::compatibility(
            "div coupling needs a scalar test space",
        ));
    }
    let rule = assembly_rule(test_space, trial_space)?;
    let mut builder = CooBuilder::new(test_space.dof_count(), trial_space.dof_count());
    for cell in 0..trial_space.cell_count() {
        let test_tab = test_space.tabulate(cell, &rule.points);
        let trial_tab = trial_space.tabulate(cell, &rule.points);
        let divs = trial_tab.divergences.as_ref().expect("divergences");
        let scale = trial_space.mesh().jacobian_det(cell);
        let test_dofs = test_space.cell_dofs(cell);
        let trial_dofs = trial_space.cell_dofs(cell);
        for (q, w) in rule.weights.iter().enumerate() {
            let wq = w * scale;
            for (i, di) in test_dofs.iter().enumerate() {
                let Some(gi) = di else { continue };
                let psi = test_tab.values[q][i][0];
                for (e, de) in trial_dofs.iter().enumerate() {
                    let Some(ge) = de else { continue };
                    builder.push(*gi, *ge, wq * psi * divs[q][e]);
                }
            }
        }
    }
    Ok(builder.finalize())
}

/// Inverse of a discontinuous-Lagrange mass matrix, assembled cell by cell
/// from the exact inverses of the local blocks.
pub fn assemble_mass_inverse(space: &FunctionSpace, coeff: f64) -> Result<CsrMatrix> {
    if space.family() != Family::DiscontinuousLagrange {
        return Err(Error::unsupported_space(
            "block-diagonal mass inverse needs a discontinuous space",
        ));
    }
    let mass = assemble_mass(space, coeff)?;
    let n = space.dof_count();
    let mut builder = CooBuilder::new(n, n);
    for cell in 0..space.cell_count() {
        let dofs: Vec<usize> = space
            .cell_dofs(cell)
            .iter()
            .map(|d| d.expect("DG dofs are never eliminated"))
            .collect();
        let m = dofs.len();
        let mut block = vec![vec![0.0f64; m]; m];
        for (i, gi) in dofs.iter().enumerate() {
            for (j, gj) in dofs.iter().enumerate() {
                block[i][j] = mass.get(*gi, *gj);
            }
        }
        let inv = invert_small(&block)?;
        for (i, gi) in dofs.iter().enumerate() {
            for (j, gj) in dofs.iter().enumerate() {
                if inv[i][j] != 0.0 {
                    builder.push(*gi, *gj, inv[i][j]);
                }
            }
        }
    }
    Ok(builder.finalize())
}

/// Gauss-Jordan inverse for the tiny local mass blocks.
fn invert_small(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
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
        let pivot_row = (col..n)
            .max_by(|&p, &q| aug[p][col].abs().total_cmp(&aug[q][col].abs()))
            .unwrap();
        if aug[pivot_row][col].abs() < 1e-300 {
            return Err(Error::invalid_argument("singular local mass block"));
        }
        aug.swap(col, pivot_row);
        let pivot = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= pivot;
        }
        for r in 0..n {
            if r != col {
                let factor = aug[r][col];
                if factor != 0.0 {
                    for j in 0..2 * n {
                        let sub = factor * aug[col][j];
                        aug[r][j] -= sub;
                    }
                }
            }
        }
    }
    Ok(aug.into_iter().map(|row| row[n..].to_vec()).collect())
}
