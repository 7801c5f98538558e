//! Finite element spaces: continuous/discontinuous Lagrange and lowest-order
//! Raviart-Thomas, with local-to-global DOF maps and basis tabulation.
//!
//! Supported combinations:
//! - 1D: continuous Lagrange k = 1..4, discontinuous Lagrange k = 0..4
//! - 2D: continuous Lagrange k = 1, discontinuous Lagrange k = 0 (scalar or
//!   two-component), Raviart-Thomas RT0
//!
//! Homogeneous Dirichlet conditions are imposed by eliminating boundary DOFs
//! from the global numbering, so `dof_count` counts free DOFs only.
//!
//! RT0 degrees of freedom are integrated normal fluxes across global edges,
//! with the edge normal fixed by the mesh (lower to higher vertex index).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    ContinuousLagrange,
    DiscontinuousLagrange,
    RaviartThomas0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    None,
    HomogeneousDirichlet,
}

/// Basis values and derivatives at a set of reference points in one cell.
///
/// `values[q][i]` is the value of local basis function `i` at point `q`
/// (scalar spaces use component 0). `gradients` is present for scalar spaces,
/// `divergences` for vector-valued spaces and for 1D scalar spaces (where the
/// derivative doubles as the divergence).
pub struct CellTabulation {
    pub values: Vec<Vec<[f64; 2]>>,
    pub gradients: Option<Vec<Vec<[f64; 2]>>>,
    pub divergences: Option<Vec<Vec<f64>>>,
}

#[derive(Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    family: Family,
    degree: usize,
    components: usize,
    bc: BoundaryCondition,
    dof_count: usize,
    /// Per cell, local index -> global free DOF (None = eliminated by the BC).
    cell_dofs: Vec<Vec<Option<usize>>>,
    /// RT0: per cell, +1/-1 depending on whether the outward normal on the
    /// edge opposite local vertex j agrees with the global edge normal.
    rt_signs: Vec<[f64; 3]>,
    /// Scalar Lagrange spaces: physical coordinates of each free DOF.
    dof_coords: Vec<[f64; 2]>,
}

/// Scalar space with the requested family/degree/boundary condition.
pub fn make_space(
    mesh: &Arc<Mesh>,
    family: Family,
    degree: usize,
    bc: BoundaryCondition,
) -> Result<FunctionSpace> {
    make_space_with_components(mesh, family, degree, bc, components_for(mesh, family))
}

/// Vector-valued variant; only two-component discontinuous Lagrange of degree 0
/// is supported on triangles (one constant vector per cell).
pub fn make_vector_space(mesh: &Arc<Mesh>, family: Family, degree: usize) -> Result<FunctionSpace> {
    if mesh.dim() != 2 || family != Family::DiscontinuousLagrange || degree != 0 {
        return Err(Error::unsupported_space(
            "vector-valued spaces are limited to 2D discontinuous Lagrange of degree 0",
        ));
    }
    make_space_with_components(mesh, family, degree, BoundaryCondition::None, 2)
}

fn components_for(mesh: &Mesh, family: Family) -> usize {
    if family == Family::RaviartThomas0 && mesh.dim() == 2 {
        2
    } else {
        1
    }
}

fn make_space_with_components(
    mesh: &Arc<Mesh>,
    family: Family,
    degree: usize,
    bc: BoundaryCondition,
    components: usize,
) -> Result<FunctionSpace> {
    match (mesh.dim(), family, degree) {
        (1, Family::ContinuousLagrange, 1..=4) => build_cg_1d(mesh, degree, bc),
        (1, Family::DiscontinuousLagrange, 0..=4) => build_dg_1d(mesh, degree, bc),
        (2, Family::ContinuousLagrange, 1) => build_cg1_2d(mesh, bc),
        (2, Family::DiscontinuousLagrange, 0) => build_dg0_2d(mesh, bc, components),
        (2, Family::RaviartThomas0, 0 | 1) => build_rt0(mesh, bc),
        (d, f, k) => Err(Error::unsupported_space(format!(
            "no {f:?} of degree {k} in {d}D"
        ))),
    }
}

/// The image space of the natural differential operator:
/// 1D CG-k maps to DG-(k-1) under d/dx, 2D RT0 maps to DG0 under div.
///
/// Both inclusions of the compatibility condition then hold with equality, so
/// derivatives of source-space functions are represented exactly.
pub fn derivative_space(space: &FunctionSpace) -> Result<FunctionSpace> {
    match (space.mesh.dim(), space.family) {
        (1, Family::ContinuousLagrange) => make_space(
            &space.mesh,
            Family::DiscontinuousLagrange,
            space.degree - 1,
            BoundaryCondition::None,
        ),
        (2, Family::RaviartThomas0) => make_space(
            &space.mesh,
            Family::DiscontinuousLagrange,
            0,
            BoundaryCondition::None,
        ),
        _ => Err(Error::unsupported_space(format!(
            "{:?} has no representable image space",
            space.family
        ))),
    }
}

fn build_cg_1d(mesh: &Arc<Mesh>, k: usize, bc: BoundaryCondition) -> Result<FunctionSpace> {
    let n = mesh.cell_count();
    let n_nodes = n * k + 1;
    let dirichlet = bc == BoundaryCondition::HomogeneousDirichlet;
    let node_to_dof = |node: usize| -> Option<usize> {
        if dirichlet {
            if node == 0 || node == n_nodes - 1 {
                None
            } else {
                Some(node - 1)
            }
        } else {
            Some(node)
        }
    };
    let dof_count = if dirichlet { n_nodes - 2 } else { n_nodes };
    let mut cell_dofs = Vec::with_capacity(n);
    let mut dof_coords = vec![[0.0, 0.0]; dof_count];
    for c in 0..n {
        let mut locals = Vec::with_capacity(k + 1);
        for l in 0..=k {
            let node = c * k + l;
            let dof = node_to_dof(node);
            if let Some(g) = dof {
                dof_coords[g] = mesh.map_to_physical(c, [l as f64 / k as f64, 0.0]);
            }
            locals.push(dof);
        }
        cell_dofs.push(locals);
    }
    Ok(FunctionSpace {
        mesh: Arc::clone(mesh),
        family: Family::ContinuousLagrange,
        degree: k,
        components: 1,
        bc,
        dof_count,
        cell_dofs,
        rt_signs: Vec::new(),
        dof_coords,
    })
}

fn build_dg_1d(mesh: &Arc<Mesh>, k: usize, bc: BoundaryCondition) -> Result<FunctionSpace> {
    if bc != BoundaryCondition::None {
        return Err(Error::unsupported_space(
            "discontinuous spaces carry no boundary condition",
        ));
    }
    let n = mesh.cell_count();
    let per_cell = k + 1;
    let mut cell_dofs = Vec::with_capacity(n);
    let mut dof_coords = vec![[0.0, 0.0]; n * per_cell];
    for c in 0..n {
        let mut locals = Vec::with_capacity(per_cell);
        for l in 0..per_cell {
            let g = c * per_cell + l;
            dof_coords[g] = mesh.map_to_physical(c, [lagrange_node_1d(k, l), 0.0]);
            locals.push(Some(g));
        }
        cell_dofs.push(locals);
    }
    Ok(FunctionSpace {
        mesh: Arc::clone(mesh),
        family: Family::DiscontinuousLagrange,
        degree: k,
        components: 1,
        bc,
        dof_count: n * per_cell,
        cell_dofs,
        rt_signs: Vec::new(),
        dof_coords,
    })
}

fn build_cg1_2d(mesh: &Arc<Mesh>, bc: BoundaryCondition) -> Result<FunctionSpace> {
    let dirichlet = bc == BoundaryCondition::HomogeneousDirichlet;
    let mut vertex_dof = vec![None; mesh.vertex_count()];
    let mut dof_coords = Vec::new();
    let mut next = 0usize;
    for v in 0..mesh.vertex_count() {
        if dirichlet && mesh.is_boundary_vertex(v) {
            continue;
        }
        vertex_dof[v] = Some(next);
        dof_coords.push(mesh.vertex(v));
        next += 1;
    }
    let cell_dofs = (0..mesh.cell_count())
        .map(|c| {
            let t = mesh.triangle(c);
            t.iter().map(|&v| vertex_dof[v]).collect()
        })
        .collect();
    Ok(FunctionSpace {
        mesh: Arc::clone(mesh),
        family: Family::ContinuousLagrange,
        degree: 1,
        components: 1,
        bc,
        dof_count: next,
        cell_dofs,
        rt_signs: Vec::new(),
        dof_coords,
    })
}

fn build_dg0_2d(mesh: &Arc<Mesh>, bc: BoundaryCondition, components: usize) -> Result<FunctionSpace> {
    if bc != BoundaryCondition::None {
        return Err(Error::unsupported_space(
            "discontinuous spaces carry no boundary condition",
        ));
    }
    let n = mesh.cell_count();
    let cell_dofs = (0..n)
        .map(|c| (0..components).map(|k| Some(c * components + k)).collect())
        .collect();
    let mut dof_coords = Vec::with_capacity(n * components);
    for c in 0..n {
        let centroid = mesh.map_to_physical(c, [1.0 / 3.0, 1.0 / 3.0]);
        for _ in 0..components {
            dof_coords.push(centroid);
        }
    }
    Ok(FunctionSpace {
        mesh: Arc::clone(mesh),
        family: Family::DiscontinuousLagrange,
        degree: 0,
        components,
        bc,
        dof_count: n * components,
        cell_dofs,
        rt_signs: Vec::new(),
        dof_coords,
    })
}

fn build_rt0(mesh: &Arc<Mesh>, bc: BoundaryCondition) -> Result<FunctionSpace> {
    if mesh.dim() != 2 {
        return Err(Error::unsupported_space("RT0 requires a triangle mesh"));
    }
    if bc != BoundaryCondition::None {
        return Err(Error::unsupported_space(
            "RT0 is used without essential boundary conditions here",
        ));
    }
    let n = mesh.cell_count();
    let mut cell_dofs = Vec::with_capacity(n);
    let mut rt_signs = Vec::with_capacity(n);
    for c in 0..n {
        let t = mesh.triangle(c);
        let edge_ids = mesh.triangle_edges(c);
        let mut locals = Vec::with_capacity(3);
        let mut signs = [0.0f64; 3];
        for j in 0..3 {
            let e = &mesh.edges()[edge_ids[j]];
            locals.push(Some(edge_ids[j]));
            // outward normal on the edge opposite vertex j points away from vertex j
            let p_opp = mesh.vertex(t[j]);
            let mid = midpoint(mesh.vertex(e.vertices[0]), mesh.vertex(e.vertices[1]));
            let away = [mid[0] - p_opp[0], mid[1] - p_opp[1]];
            let agree = away[0] * e.normal[0] + away[1] * e.normal[1];
            signs[j] = if agree >= 0.0 { 1.0 } else { -1.0 };
        }
        cell_dofs.push(locals);
        rt_signs.push(signs);
    }
    Ok(FunctionSpace {
        mesh: Arc::clone(mesh),
        family: Family::RaviartThomas0,
        degree: 1,
        components: 2,
        bc,
        dof_count: mesh.edge_count(),
        cell_dofs,
        rt_signs,
        dof_coords: Vec::new(),
    })
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Equispaced Lagrange node `l` of degree `k` on [0, 1].
fn lagrange_node_1d(k: usize, l: usize) -> f64 {
    if k == 0 {
        0.5
    } else {
        l as f64 / k as f64
    }
}

/// Value and derivative of the 1D Lagrange basis function `i` at `t`.
fn lagrange_eval_1d(k: usize, i: usize, t: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let node = |j: usize| lagrange_node_1d(k, j);
    let mut value = 1.0;
    for j in 0..=k {
        if j != i {
            value *= (t - node(j)) / (node(i) - node(j));
        }
    }
    let mut deriv = 0.0;
    for m in 0..=k {
        if m == i {
            continue;
        }
        let mut term = 1.0 / (node(i) - node(m));
        for j in 0..=k {
            if j != i && j != m {
                term *= (t - node(j)) / (node(i) - node(j));
            }
        }
        deriv += term;
    }
    (value, deriv)
}

impl FunctionSpace {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of value components (1 for scalar spaces, 2 for vector fields).
    pub fn components(&self) -> usize {
        self.components
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    /// Number of free global DOFs.
    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn cell_count(&self) -> usize {
        self.mesh.cell_count()
    }

    pub fn local_dim(&self) -> usize {
        match (self.mesh.dim(), self.family) {
            (1, _) => self.degree + 1,
            (2, Family::ContinuousLagrange) => 3,
            (2, Family::DiscontinuousLagrange) => self.components,
            (2, Family::RaviartThomas0) => 3,
            _ => unreachable!(),
        }
    }

    /// Global free-DOF indices of a cell (None = eliminated boundary DOF).
    pub fn cell_dofs(&self, cell: usize) -> &[Option<usize>] {
        &self.cell_dofs[cell]
    }

    /// Physical coordinates of each free DOF (scalar Lagrange spaces only).
    pub fn dof_coords(&self) -> Result<&[[f64; 2]]> {
        if self.family == Family::RaviartThomas0 {
            return Err(Error::unsupported_space(
                "RT0 DOFs are edge fluxes, not point values",
            ));
        }
        Ok(&self.dof_coords)
    }

    /// Whether functions in this space have a well-defined weak gradient
    /// (conforming in H(grad)).
    pub fn supports_gradient(&self) -> bool {
        self.family == Family::ContinuousLagrange
    }

    /// Whether functions in this space have a well-defined weak divergence.
    /// In 1D the derivative of a continuous function plays that role.
    pub fn supports_divergence(&self) -> bool {
        match self.mesh.dim() {
            1 => self.family == Family::ContinuousLagrange,
            _ => self.family == Family::RaviartThomas0,
        }
    }

    /// Tabulate basis values (and gradient/divergence where defined) at
    /// reference points of one cell. Values are physical.
    pub fn tabulate(&self, cell: usize, points: &[[f64; 2]]) -> CellTabulation {
        match (self.mesh.dim(), self.family) {
            (1, _) => self.tabulate_1d(cell, points),
            (2, Family::ContinuousLagrange) => self.tabulate_cg1_2d(cell, points),
            (2, Family::DiscontinuousLagrange) => self.tabulate_dg0_2d(points),
            (2, Family::RaviartThomas0) => self.tabulate_rt0(cell, points),
            _ => unreachable!(),
        }
    }

    fn tabulate_1d(&self, cell: usize, points: &[[f64; 2]]) -> CellTabulation {
        let k = self.degree;
        let h = self.mesh.cell_measure(cell);
        let nloc = self.local_dim();
        let mut values = Vec::with_capacity(points.len());
        let mut gradients = Vec::with_capacity(points.len());
        let mut divergences = Vec::with_capacity(points.len());
        for p in points {
            let mut vrow = Vec::with_capacity(nloc);
            let mut grow = Vec::with_capacity(nloc);
            let mut drow = Vec::with_capacity(nloc);
            for i in 0..nloc {
                let (v, d_ref) = lagrange_eval_1d(k, i, p[0]);
                let d = d_ref / h;
                vrow.push([v, 0.0]);
                grow.push([d, 0.0]);
                drow.push(d);
            }
            values.push(vrow);
            gradients.push(grow);
            divergences.push(drow);
        }
        CellTabulation {
            values,
            gradients: Some(gradients),
            divergences: Some(divergences),
        }
    }

    fn tabulate_cg1_2d(&self, cell: usize, points: &[[f64; 2]]) -> CellTabulation {
        let jinv_t = self.mesh.jacobian_inv_t(cell);
        let ref_grads = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let phys_grads: Vec<[f64; 2]> = ref_grads
            .iter()
            .map(|g| {
                [
                    jinv_t[0][0] * g[0] + jinv_t[0][1] * g[1],
                    jinv_t[1][0] * g[0] + jinv_t[1][1] * g[1],
                ]
            })
            .collect();
        let mut values = Vec::with_capacity(points.len());
        let mut gradients = Vec::with_capacity(points.len());
        for p in points {
            let lambdas = [1.0 - p[0] - p[1], p[0], p[1]];
            values.push(lambdas.iter().map(|&l| [l, 0.0]).collect());
            gradients.push(phys_grads.clone());
        }
        CellTabulation {
            values,
            gradients: Some(gradients),
            divergences: None,
        }
    }

    fn tabulate_dg0_2d(&self, points: &[[f64; 2]]) -> CellTabulation {
        let nloc = self.components;
        let mut values = Vec::with_capacity(points.len());
        let mut divergences = Vec::with_capacity(points.len());
        for _ in points {
            let mut vrow = Vec::with_capacity(nloc);
            for comp in 0..nloc {
                let mut v = [0.0, 0.0];
                v[comp] = 1.0;
                vrow.push(v);
            }
            values.push(vrow);
            divergences.push(vec![0.0; nloc]);
        }
        let gradients = if self.components == 1 {
            // piecewise constants: zero gradient inside each cell
            Some(points.iter().map(|_| vec![[0.0, 0.0]; 1]).collect())
        } else {
            None
        };
        CellTabulation {
            values,
            gradients,
            divergences: Some(divergences),
        }
    }

    fn tabulate_rt0(&self, cell: usize, points: &[[f64; 2]]) -> CellTabulation {
        let t = self.mesh.triangle(cell);
        let area = self.mesh.triangle_area(cell);
        let signs = self.rt_signs[cell];
        let mut values = Vec::with_capacity(points.len());
        let mut divergences = Vec::with_capacity(points.len());
        for p in points {
            let x = self.mesh.map_to_physical(cell, *p);
            let mut vrow = Vec::with_capacity(3);
            let mut drow = Vec::with_capacity(3);
            for j in 0..3 {
                let pj = self.mesh.vertex(t[j]);
                let s = signs[j];
                vrow.push([
                    s * (x[0] - pj[0]) / (2.0 * area),
                    s * (x[1] - pj[1]) / (2.0 * area),
                ]);
                drow.push(s / area);
            }
            values.push(vrow);
            divergences.push(drow);
        }
        CellTabulation {
            values,
            gradients: None,
            divergences: Some(divergences),
        }
    }

    /// Nodal interpolation of a scalar function (Lagrange spaces).
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
        if self.family == Family::RaviartThomas0 || self.components != 1 {
            return Err(Error::unsupported_space(
                "nodal interpolation needs a scalar Lagrange space",
            ));
        }
        Ok(self.dof_coords.iter().map(|&x| f(x)).collect())
    }

    /// Componentwise interpolation of a vector field at cell centroids
    /// (two-component DG0 only).
    pub fn interpolate_vector(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
        if self.components != 2 || self.family != Family::DiscontinuousLagrange {
            return Err(Error::unsupported_space(
                "vector interpolation needs a two-component DG0 space",
            ));
        }
        let mut out = vec![0.0; self.dof_count];
        for c in 0..self.cell_count() {
            let centroid = self.mesh.map_to_physical(c, [1.0 / 3.0, 1.0 / 3.0]);
            let v = f(centroid);
            out[2 * c] = v[0];
            out[2 * c + 1] = v[1];
        }
        Ok(out)
    }

    /// Evaluate a coefficient vector at a reference point of one cell.
    pub fn eval(&self, coeffs: &[f64], cell: usize, point: [f64; 2]) -> [f64; 2] {
        let tab = self.tabulate(cell, &[point]);
        let mut out = [0.0, 0.0];
        for (i, dof) in self.cell_dofs(cell).iter().enumerate() {
            if let Some(g) = dof {
                out[0] += coeffs[*g] * tab.values[0][i][0];
                out[1] += coeffs[*g] * tab.values[0][i][1];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rect_mesh};
    use crate::quadrature::{gauss_legendre, triangle_degree4};

    fn interval(n: usize) -> Arc<Mesh> {
        Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap())
    }

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_rect_mesh((0.0, 1.0), (0.0, 1.0), n, n).unwrap())
    }

    #[test]
    fn cg2_dirichlet_dof_count() {
        let space = make_space(
            &interval(4),
            Family::ContinuousLagrange,
            2,
            BoundaryCondition::HomogeneousDirichlet,
        )
        .unwrap();
        assert_eq!(space.dof_count(), 7);
    }

    #[test]
    fn dg1_dof_count() {
        let space = make_space(
            &interval(4),
            Family::DiscontinuousLagrange,
            1,
            BoundaryCondition::None,
        )
        .unwrap();
        assert_eq!(space.dof_count(), 8);
    }

    #[test]
    fn rt0_dof_count_is_edge_count() {
        // 8 triangles, 9 vertices: Euler gives E = V + F - 2 = 9 + 9 - 2 = 16
        let space = make_space(
            &square(2),
            Family::RaviartThomas0,
            1,
            BoundaryCondition::None,
        )
        .unwrap();
        assert_eq!(space.dof_count(), 16);
    }

    #[test]
    fn unsupported_combinations_rejected() {
        assert!(make_space(
            &interval(2),
            Family::ContinuousLagrange,
            5,
            BoundaryCondition::None
        )
        .is_err());
        assert!(make_space(
            &square(2),
            Family::ContinuousLagrange,
            2,
            BoundaryCondition::None
        )
        .is_err());
        assert!(make_space(
            &interval(2),
            Family::RaviartThomas0,
            1,
            BoundaryCondition::None
        )
        .is_err());
    }

    #[test]
    fn lagrange_partition_of_unity() {
        let rule = gauss_legendre(5).unwrap();
        for k in 1..=4usize {
            let space = make_space(
                &interval(3),
                Family::ContinuousLagrange,
                k,
                BoundaryCondition::None,
            )
            .unwrap();
            for c in 0..space.cell_count() {
                let tab = space.tabulate(c, &rule.points);
                for row in &tab.values {
                    let sum: f64 = row.iter().map(|v| v[0]).sum();
                    assert!((sum - 1.0).abs() < 1e-13, "k = {k}: {sum}");
                }
            }
        }
        let rule2 = triangle_degree4();
        let space = make_space(
            &square(2),
            Family::ContinuousLagrange,
            1,
            BoundaryCondition::None,
        )
        .unwrap();
        for c in 0..space.cell_count() {
            let tab = space.tabulate(c, &rule2.points);
            for row in &tab.values {
                let sum: f64 = row.iter().map(|v| v[0]).sum();
                assert!((sum - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cg_interpolation_reproduces_polynomials() {
        let rule = gauss_legendre(6).unwrap();
        for k in 1..=4usize {
            let space = make_space(
                &interval(3),
                Family::ContinuousLagrange,
                k,
                BoundaryCondition::None,
            )
            .unwrap();
            // degree-k polynomial with O(1) coefficients
            let poly = |x: f64| (0..=k).map(|p| 0.3 + (p as f64) * x.powi(p as i32)).sum::<f64>();
            let coeffs = space.interpolate(|x| poly(x[0])).unwrap();
            for c in 0..space.cell_count() {
                for p in &rule.points {
                    let x = space.mesh().map_to_physical(c, *p);
                    let got = space.eval(&coeffs, c, *p)[0];
                    assert!(
                        (got - poly(x[0])).abs() < 1e-12,
                        "k = {k}: {got} vs {}",
                        poly(x[0])
                    );
                }
            }
        }
    }

    #[test]
    fn rt0_normal_trace_continuity() {
        let mesh = square(2);
        let space = make_space(
            &mesh,
            Family::RaviartThomas0,
            1,
            BoundaryCondition::None,
        )
        .unwrap();
        // For every interior edge and every basis function, the normal trace
        // evaluated from the two adjacent cells must agree.
        for (e_id, edge) in mesh.edges().iter().enumerate() {
            let Some(c1) = edge.cells[1] else { continue };
            let c0 = edge.cells[0].unwrap();
            let mid = [
                (mesh.vertex(edge.vertices[0])[0] + mesh.vertex(edge.vertices[1])[0]) / 2.0,
                (mesh.vertex(edge.vertices[0])[1] + mesh.vertex(edge.vertices[1])[1]) / 2.0,
            ];
            for cell in [c0, c1] {
                // find reference coordinates of the edge midpoint in this cell
                let t = mesh.triangle(cell);
                let pa = mesh.vertex(t[0]);
                let jinv_t = mesh.jacobian_inv_t(cell);
                // solve J r = mid - pa using inv(J)^T transposed back
                let rhs = [mid[0] - pa[0], mid[1] - pa[1]];
                let r = [
                    jinv_t[0][0] * rhs[0] + jinv_t[1][0] * rhs[1],
                    jinv_t[0][1] * rhs[0] + jinv_t[1][1] * rhs[1],
                ];
                let tab = space.tabulate(cell, &[r]);
                let local = space
                    .cell_dofs(cell)
                    .iter()
                    .position(|d| *d == Some(e_id))
                    .unwrap();
                let v = tab.values[0][local];
                let trace = v[0] * edge.normal[0] + v[1] * edge.normal[1];
                assert!(
                    (trace - 1.0 / edge.length).abs() < 1e-13,
                    "edge {e_id} from cell {cell}: {trace}"
                );
            }
        }
    }

    #[test]
    fn derivative_space_images() {
        let cg2 = make_space(
            &interval(5),
            Family::ContinuousLagrange,
            2,
            BoundaryCondition::None,
        )
        .unwrap();
        let img = derivative_space(&cg2).unwrap();
        assert_eq!(img.family(), Family::DiscontinuousLagrange);
        assert_eq!(img.degree(), 1);
        assert_eq!(img.dof_count(), 10);

        let rt0 = make_space(
            &square(2),
            Family::RaviartThomas0,
            1,
            BoundaryCondition::None,
        )
        .unwrap();
        let img2 = derivative_space(&rt0).unwrap();
        assert_eq!(img2.family(), Family::DiscontinuousLagrange);
        assert_eq!(img2.degree(), 0);
        assert_eq!(img2.dof_count(), rt0.mesh().cell_count());

        let dg = make_space(
            &interval(5),
            Family::DiscontinuousLagrange,
            1,
            BoundaryCondition::None,
        )
        .unwrap();
        assert!(derivative_space(&dg).is_err());
    }

    #[test]
    fn rt0_divergence_is_constant_per_cell() {
        let mesh = square(2);
        let space = make_space(&mesh, Family::RaviartThomas0, 1, BoundaryCondition::None).unwrap();
        let rule = triangle_degree4();
        for c in 0..space.cell_count() {
            let tab = space.tabulate(c, &rule.points);
            let d = tab.divergences.as_ref().unwrap();
            for q in 1..rule.points.len() {
                for i in 0..3 {
                    assert!((d[q][i] - d[0][i]).abs() < 1e-13);
                }
            }
        }
    }
}
