//! Interval and structured-triangle meshes.
//!
//! Conventions:
//! - 1D cells are sorted left to right and contiguous.
//! - Rectangles are triangulated with a fixed lower-left to upper-right
//!   diagonal, giving positively oriented triangles and deterministic output.
//! - Global edges are oriented from the lower to the higher vertex index;
//!   the stored unit normal is the tangent rotated by -90 degrees.

use crate::error::{Error, Result};

/// Relative tolerance for the covering check (sum of cell measures vs domain measure).
const COVER_TOL: f64 = 1e-12;

/// A global mesh edge (2D only).
#[derive(Debug, Clone)]
pub struct Edge {
    /// Vertex indices with `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Adjacent cells; boundary edges have `cells[1] == None`.
    pub cells: [Option<usize>; 2],
    pub length: f64,
    /// Fixed global unit normal (tangent lo->hi rotated by -90 degrees).
    pub normal: [f64; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells[1].is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<[f64; 2]>,
    segments: Vec<[usize; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// Per triangle, the global edge index opposite each local vertex.
    cell_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    h_max: f64,
    domain_measure: f64,
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn cell_count(&self) -> usize {
        match self.dim {
            1 => self.segments.len(),
            _ => self.triangles.len(),
        }
    }

    pub fn segment(&self, c: usize) -> [usize; 2] {
        self.segments[c]
    }

    pub fn triangle(&self, c: usize) -> [usize; 3] {
        self.triangles[c]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge indices of a triangle, entry `j` opposite local vertex `j`.
    pub fn triangle_edges(&self, c: usize) -> [usize; 3] {
        self.cell_edges[c]
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        self.boundary_vertex[i]
    }

    /// Max cell diameter.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn domain_measure(&self) -> f64 {
        self.domain_measure
    }

    /// Length (1D) or area (2D) of a cell.
    pub fn cell_measure(&self, c: usize) -> f64 {
        match self.dim {
            1 => {
                let [a, b] = self.segments[c];
                self.vertices[b][0] - self.vertices[a][0]
            }
            _ => self.triangle_area(c),
        }
    }

    pub fn triangle_area(&self, c: usize) -> f64 {
        let [a, b, d] = self.triangles[c];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[d])
    }

    /// Physical coordinates of a reference point in cell `c`.
    pub fn map_to_physical(&self, c: usize, p: [f64; 2]) -> [f64; 2] {
        match self.dim {
            1 => {
                let [a, b] = self.segments[c];
                let xa = self.vertices[a][0];
                let xb = self.vertices[b][0];
                [xa + p[0] * (xb - xa), 0.0]
            }
            _ => {
                let [a, b, d] = self.triangles[c];
                let pa = self.vertices[a];
                let pb = self.vertices[b];
                let pd = self.vertices[d];
                [
                    pa[0] + p[0] * (pb[0] - pa[0]) + p[1] * (pd[0] - pa[0]),
                    pa[1] + p[0] * (pb[1] - pa[1]) + p[1] * (pd[1] - pa[1]),
                ]
            }
        }
    }

    /// Jacobian determinant of the reference-to-physical map (h in 1D, 2A in 2D).
    pub fn jacobian_det(&self, c: usize) -> f64 {
        match self.dim {
            1 => self.cell_measure(c),
            _ => 2.0 * self.triangle_area(c),
        }
    }

    /// Inverse-transpose Jacobian, for mapping reference gradients (2D).
    pub fn jacobian_inv_t(&self, c: usize) -> [[f64; 2]; 2] {
        let [a, b, d] = self.triangles[c];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let pd = self.vertices[d];
        let j = [
            [pb[0] - pa[0], pd[0] - pa[0]],
            [pb[1] - pa[1], pd[1] - pa[1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // inv(J)^T = adj(J)^T / det
        [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ]
    }

    fn validate_cover(&self) -> Result<()> {
        let total: f64 = (0..self.cell_count()).map(|c| self.cell_measure(c)).sum();
        let rel = (total - self.domain_measure).abs() / self.domain_measure;
        if rel > COVER_TOL {
            return Err(Error::invalid_argument(format!(
                "cells do not cover the domain: measures sum to {total}, domain is {}",
                self.domain_measure
            )));
        }
        Ok(())
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Uniform mesh of [a, b] with n cells; endpoints flagged as boundary.
pub fn build_interval_mesh(a: f64, b: f64, n: usize) -> Result<Mesh> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid_argument("interval bounds must be finite"));
    }
    if a >= b {
        return Err(Error::invalid_argument(format!(
            "interval bounds must satisfy a < b, got [{a}, {b}]"
        )));
    }
    if n == 0 {
        return Err(Error::invalid_argument("interval mesh needs n >= 1 cells"));
    }
    let h = (b - a) / n as f64;
    let vertices: Vec<[f64; 2]> = (0..=n)
        .map(|i| {
            let x = if i == n { b } else { a + i as f64 * h };
            [x, 0.0]
        })
        .collect();
    let segments: Vec<[usize; 2]> = (0..n).map(|i| [i, i + 1]).collect();
    let mut boundary_vertex = vec![false; n + 1];
    boundary_vertex[0] = true;
    boundary_vertex[n] = true;
    let mesh = Mesh {
        dim: 1,
        vertices,
        segments,
        triangles: Vec::new(),
        edges: Vec::new(),
        cell_edges: Vec::new(),
        boundary_vertex,
        h_max: h,
        domain_measure: b - a,
    };
    mesh.validate_cover()?;
    Ok(mesh)
}

/// Structured triangulation of [x0, x1] x [y0, y1] with 2 * nx * ny triangles.
///
/// Each grid quad is split along its lower-left to upper-right diagonal; both
/// triangles are counter-clockwise.
pub fn build_rect_mesh(
    x_extent: (f64, f64),
    y_extent: (f64, f64),
    nx: usize,
    ny: usize,
) -> Result<Mesh> {
    let (x0, x1) = x_extent;
    let (y0, y1) = y_extent;
    if ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
        return Err(Error::invalid_argument("rectangle extents must be finite"));
    }
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::invalid_argument(
            "rectangle extents must be positive",
        ));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::invalid_argument("rectangle mesh needs nx, ny >= 1"));
    }
    let dx = (x1 - x0) / nx as f64;
    let dy = (y1 - y0) / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { x1 } else { x0 + i as f64 * dx };
            let y = if j == ny { y1 } else { y0 + j as f64 * dy };
            vertices.push([x, y]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let ll = vid(i, j);
            let lr = vid(i + 1, j);
            let ur = vid(i + 1, j + 1);
            let ul = vid(i, j + 1);
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }

    // Global edge table, sorted lexicographically by (lo, hi) vertex pair.
    let mut pairs: Vec<[usize; 2]> = Vec::with_capacity(3 * triangles.len());
    for t in &triangles {
        for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            pairs.push([u.min(v), u.max(v)]);
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let edge_index = |pair: [usize; 2]| pairs.binary_search(&pair).expect("edge in table");

    let mut edges: Vec<Edge> = pairs
        .iter()
        .map(|&[lo, hi]| {
            let p = vertices[lo];
            let q = vertices[hi];
            let tx = q[0] - p[0];
            let ty = q[1] - p[1];
            let len = (tx * tx + ty * ty).sqrt();
            Edge {
                vertices: [lo, hi],
                cells: [None, None],
                length: len,
                normal: [ty / len, -tx / len],
            }
        })
        .collect();

    let mut cell_edges = Vec::with_capacity(triangles.len());
    for (c, t) in triangles.iter().enumerate() {
        // edge j is opposite local vertex j
        let opposite = [
            [t[1].min(t[2]), t[1].max(t[2])],
            [t[0].min(t[2]), t[0].max(t[2])],
            [t[0].min(t[1]), t[0].max(t[1])],
        ];
        let mut ids = [0usize; 3];
        for (slot, pair) in opposite.iter().enumerate() {
            let e = edge_index(*pair);
            ids[slot] = e;
            if edges[e].cells[0].is_none() {
                edges[e].cells[0] = Some(c);
            } else {
                edges[e].cells[1] = Some(c);
            }
        }
        cell_edges.push(ids);
    }

    let mut boundary_vertex = vec![false; vertices.len()];
    for e in &edges {
        if e.is_boundary() {
            boundary_vertex[e.vertices[0]] = true;
            boundary_vertex[e.vertices[1]] = true;
        }
    }

    let h_max = (dx * dx + dy * dy).sqrt();
    let mesh = Mesh {
        dim: 2,
        vertices,
        segments: Vec::new(),
        triangles,
        edges,
        cell_edges,
        boundary_vertex,
        h_max,
        domain_measure: (x1 - x0) * (y1 - y0),
    };
    for c in 0..mesh.cell_count() {
        if mesh.triangle_area(c) <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "triangle {c} is not positively oriented"
            )));
        }
    }
    mesh.validate_cover()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_two_cells() {
        let mesh = build_interval_mesh(0.0, 1.0, 2).unwrap();
        assert_eq!(mesh.cell_count(), 2);
        assert_eq!(mesh.vertex_count(), 3);
        let xs: Vec<f64> = (0..3).map(|i| mesh.vertex(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        assert!(mesh.is_boundary_vertex(0));
        assert!(!mesh.is_boundary_vertex(1));
        assert!(mesh.is_boundary_vertex(2));
    }

    #[test]
    fn minimal_interval_mesh() {
        let mesh = build_interval_mesh(0.0, 1.0, 1).unwrap();
        assert_eq!(mesh.cell_count(), 1);
        assert!(mesh.is_boundary_vertex(0) && mesh.is_boundary_vertex(1));
    }

    #[test]
    fn interval_h_is_width_over_n() {
        let mesh = build_interval_mesh(-1.0, 3.0, 8).unwrap();
        assert!((mesh.h_max() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interval_rejects_bad_arguments() {
        assert!(build_interval_mesh(f64::NAN, 1.0, 2).is_err());
        assert!(build_interval_mesh(1.0, 1.0, 2).is_err());
        assert!(build_interval_mesh(2.0, 1.0, 2).is_err());
        assert!(build_interval_mesh(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn unit_square_single_quad() {
        let mesh = build_rect_mesh((0.0, 1.0), (0.0, 1.0), 1, 1).unwrap();
        assert_eq!(mesh.cell_count(), 2);
        assert_eq!(mesh.vertex_count(), 4);
    }

    #[test]
    fn unit_square_two_by_two() {
        let mesh = build_rect_mesh((0.0, 1.0), (0.0, 1.0), 2, 2).unwrap();
        assert_eq!(mesh.cell_count(), 8);
        assert_eq!(mesh.vertex_count(), 9);
        assert_eq!(mesh.edge_count(), 16);
    }

    #[test]
    fn triangle_areas_partition_unit_square() {
        for (nx, ny) in [(1, 1), (2, 3), (5, 4)] {
            let mesh = build_rect_mesh((0.0, 1.0), (0.0, 1.0), nx, ny).unwrap();
            let total: f64 = (0..mesh.cell_count()).map(|c| mesh.cell_measure(c)).sum();
            assert!((total - 1.0).abs() < 1e-12, "nx={nx} ny={ny}: {total}");
            for c in 0..mesh.cell_count() {
                assert!(mesh.triangle_area(c) > 0.0);
            }
        }
    }

    #[test]
    fn rect_rejects_degenerate_extents() {
        assert!(build_rect_mesh((0.0, 0.0), (0.0, 1.0), 1, 1).is_err());
        assert!(build_rect_mesh((0.0, 1.0), (2.0, 1.0), 1, 1).is_err());
        assert!(build_rect_mesh((0.0, 1.0), (0.0, 1.0), 0, 1).is_err());
    }

    #[test]
    fn interior_edges_have_two_cells() {
        let mesh = build_rect_mesh((0.0, 1.0), (0.0, 1.0), 2, 2).unwrap();
        let boundary = mesh.edges().iter().filter(|e| e.is_boundary()).count();
        let interior = mesh.edge_count() - boundary;
        // 8 boundary edges on the square outline, 8 interior
        assert_eq!(boundary, 8);
        assert_eq!(interior, 8);
        for e in mesh.edges() {
            assert!(e.cells[0].is_some());
            let lo = e.vertices[0];
            let hi = e.vertices[1];
            assert!(lo < hi);
            let n = e.normal;
            assert!((n[0] * n[0] + n[1] * n[1] - 1.0).abs() < 1e-14);
        }
    }
}
