//! Uniform periodic triangular meshes of the square `[0, L]^2`.
//!
//! The mesh is an N x N grid of squares, each split into two triangles along
//! the diagonal from the lower-left to the upper-right corner. Vertices on
//! `x = L` are identified with `x = 0` (likewise in y), so the mesh is a
//! closed surface with `N^2` vertex classes, `2 N^2` triangles and no
//! boundary edges. Vertex ids follow `id = (i mod N) + N * (j mod N)`.

use crate::error::{Error, Result};

/// Geometric data cached per triangle: the physical (unwrapped) corner
/// coordinates, the area and the constant gradients of the three
/// barycentric basis functions.
#[derive(Debug, Clone)]
pub struct TriangleGeometry {
    pub corners: [[f64; 2]; 3],
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    length: f64,
    cells_per_side: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    geometry: Vec<TriangleGeometry>,
}

impl PeriodicMesh {
    /// Builds the uniform periodic triangulation with `n` cells per side.
    pub fn build_uniform(n: usize, length: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!(
                "mesh needs at least 2 cells per side, got {n}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::invalid(format!("side length must be positive, got {length}")));
        }
        let h = length / n as f64;
        let mut vertices = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let vid = |i: usize, j: usize| (i % n) + n * (j % n);
        let mut triangles = Vec::with_capacity(2 * n * n);
        let mut geometry = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let x0 = i as f64 * h;
                let y0 = j as f64 * h;
                // lower triangle: (i,j) -> (i+1,j) -> (i+1,j+1)
                let lower = [
                    [x0, y0],
                    [x0 + h, y0],
                    [x0 + h, y0 + h],
                ];
                triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
                geometry.push(triangle_geometry(lower));
                // upper triangle: (i,j) -> (i+1,j+1) -> (i,j+1)
                let upper = [
                    [x0, y0],
                    [x0 + h, y0 + h],
                    [x0, y0 + h],
                ];
                triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
                geometry.push(triangle_geometry(upper));
            }
        }
        Ok(PeriodicMesh {
            length,
            cells_per_side: n,
            vertices,
            triangles,
            geometry,
        })
    }

    /// Nested refinement: doubles the number of cells per side. Every coarse
    /// vertex coordinate survives and every coarse triangle is the union of
    /// four fine triangles.
    pub fn refine(&self) -> Result<Self> {
        let n = self
            .cells_per_side
            .checked_mul(2)
            .ok_or_else(|| Error::invalid("cells per side overflow on refine"))?;
        PeriodicMesh::build_uniform(n, self.length)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    /// Mesh size h = L / N.
    pub fn h(&self) -> f64 {
        self.length / self.cells_per_side as f64
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Representative coordinate of a vertex class (the copy inside `[0,L)^2`).
    pub fn vertex(&self, id: usize) -> [f64; 2] {
        self.vertices[id]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn geometry(&self, t: usize) -> &TriangleGeometry {
        &self.geometry[t]
    }

    /// Wraps an arbitrary point of the plane into `[0, L) x [0, L)`.
    pub fn wrap(&self, p: [f64; 2]) -> [f64; 2] {
        let mut q = [p[0].rem_euclid(self.length), p[1].rem_euclid(self.length)];
        // rem_euclid can return L itself for tiny negative inputs
        for c in &mut q {
            if *c >= self.length {
                *c = 0.0;
            }
        }
        q
    }

    /// Locates the (wrapped) point: returns the containing triangle index and
    /// its barycentric coordinates there.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        let q = self.wrap(p);
        let n = self.cells_per_side;
        let h = self.h();
        let mut i = (q[0] / h).floor() as usize;
        let mut j = (q[1] / h).floor() as usize;
        if i >= n {
            i = n - 1;
        }
        if j >= n {
            j = n - 1;
        }
        let xi = (q[0] - i as f64 * h) / h;
        let eta = (q[1] - j as f64 * h) / h;
        // cell (i,j) holds triangles 2*(i + n*j) (lower, eta <= xi) and +1 (upper)
        let cell = i + n * j;
        let (t, bary) = if eta <= xi {
            // lower: vertices (0,0), (1,0), (1,1) in cell coordinates
            (2 * cell, [1.0 - xi, xi - eta, eta])
        } else {
            // upper: vertices (0,0), (1,1), (0,1)
            (2 * cell + 1, [1.0 - eta, xi, eta - xi])
        };
        (t, bary)
    }

    /// Evaluates a P1 coefficient vector at an arbitrary point.
    pub fn eval_p1(&self, coeffs: &[f64], p: [f64; 2]) -> f64 {
        let (t, bary) = self.locate(p);
        let tri = self.triangles[t];
        bary[0] * coeffs[tri[0]] + bary[1] * coeffs[tri[1]] + bary[2] * coeffs[tri[2]]
    }

    /// True when `fine` is the nested refinement of `self`.
    pub fn is_refinement_of(&self, coarse: &PeriodicMesh) -> bool {
        self.cells_per_side == 2 * coarse.cells_per_side
            && (self.length - coarse.length).abs() <= 1e-12 * coarse.length
    }
}

fn triangle_geometry(corners: [[f64; 2]; 3]) -> TriangleGeometry {
    let [a, b, c] = corners;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let area = 0.5 * det;
    debug_assert!(area > 0.0, "triangle orientation must be counterclockwise");
    // grad of barycentric i is the 90-degree rotation of the opposite edge / (2A)
    let mut grads = [[0.0; 2]; 3];
    for i in 0..3 {
        let p = corners[(i + 1) % 3];
        let q = corners[(i + 2) % 3];
        let e = [q[0] - p[0], q[1] - p[1]];
        grads[i] = [-e[1] / det, e[0] / det];
    }
    TriangleGeometry { corners, area, grads }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_areas() {
        let m = PeriodicMesh::build_uniform(2, 1.0).unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_triangles(), 8);
        for t in 0..m.num_triangles() {
            assert!((m.geometry(t).area - 0.125).abs() < 1e-15);
        }
        let m4 = PeriodicMesh::build_uniform(4, 1.0).unwrap();
        assert!((m4.h() - 0.25).abs() < 1e-15);
        let total: f64 = (0..m4.num_triangles()).map(|t| m4.geometry(t).area).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_area_matches_square() {
        for n in [2usize, 3, 5, 8, 16] {
            let m = PeriodicMesh::build_uniform(n, 2.5).unwrap();
            let total: f64 = (0..m.num_triangles()).map(|t| m.geometry(t).area).sum();
            assert!((total - 6.25).abs() < 1e-12 * 6.25, "n={n} total={total}");
        }
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(PeriodicMesh::build_uniform(1, 1.0).is_err());
        assert!(PeriodicMesh::build_uniform(0, 1.0).is_err());
        assert!(PeriodicMesh::build_uniform(4, 0.0).is_err());
    }

    #[test]
    fn periodic_identification() {
        let m = PeriodicMesh::build_uniform(2, 1.0).unwrap();
        // (1.0, 0.5) wraps onto the vertex class of (0.0, 0.5)
        let (t, bary) = m.locate([1.0, 0.5]);
        let tri = m.triangle(t);
        let mut hit = false;
        for k in 0..3 {
            if bary[k] > 1.0 - 1e-12 {
                let v = m.vertex(tri[k]);
                assert!((v[0] - 0.0).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);
                hit = true;
            }
        }
        assert!(hit, "expected a vertex hit");
    }

    #[test]
    fn barycentric_gradients_sum_to_zero() {
        let m = PeriodicMesh::build_uniform(3, 1.7).unwrap();
        for t in 0..m.num_triangles() {
            let g = m.geometry(t);
            let sx: f64 = g.grads.iter().map(|v| v[0]).sum();
            let sy: f64 = g.grads.iter().map(|v| v[1]).sum();
            assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
        }
    }

    #[test]
    fn every_edge_shared_by_two_triangles() {
        // key geometric edges by their wrapped midpoint: under periodic
        // identification two distinct edges may connect the same vertex
        // classes, but midpoints on the half-step lattice are unique
        use std::collections::HashMap;
        for n in [2usize, 3, 4] {
            let m = PeriodicMesh::build_uniform(n, 1.0).unwrap();
            let h = m.h();
            let mut counts: HashMap<(i64, i64), usize> = HashMap::new();
            for t in 0..m.num_triangles() {
                let g = m.geometry(t);
                for k in 0..3 {
                    let a = g.corners[k];
                    let b = g.corners[(k + 1) % 3];
                    let mid = m.wrap([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                    let key = (
                        (2.0 * mid[0] / h).round() as i64 % (2 * n as i64),
                        (2.0 * mid[1] / h).round() as i64 % (2 * n as i64),
                    );
                    *counts.entry(key).or_insert(0) += 1;
                }
            }
            assert!(counts.values().all(|&c| c == 2), "n={n}: open edges found");
            assert_eq!(counts.len(), 3 * n * n, "n={n}: edge count");
        }
    }

    #[test]
    fn refine_doubles_and_nests() {
        let m = PeriodicMesh::build_uniform(2, 1.0).unwrap();
        let f = m.refine().unwrap();
        assert_eq!(f.cells_per_side(), 4);
        assert_eq!(f.num_vertices(), 16);
        assert_eq!(f.num_triangles(), 32);
        assert!(f.is_refinement_of(&m));
        // every coarse vertex coordinate appears among fine vertices
        for v in m.vertices() {
            let found = f
                .vertices()
                .iter()
                .any(|w| (w[0] - v[0]).abs() < 1e-14 && (w[1] - v[1]).abs() < 1e-14);
            assert!(found);
        }
        let ff = f.refine().unwrap();
        assert!((ff.h() - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn locate_centroids_and_vertices() {
        for n in [2usize, 3, 4, 8] {
            let m = PeriodicMesh::build_uniform(n, 1.0).unwrap();
            for t in 0..m.num_triangles() {
                let g = m.geometry(t);
                let cx = (g.corners[0][0] + g.corners[1][0] + g.corners[2][0]) / 3.0;
                let cy = (g.corners[0][1] + g.corners[1][1] + g.corners[2][1]) / 3.0;
                let (tt, bary) = m.locate([cx, cy]);
                assert_eq!(tt, t);
                for b in bary {
                    assert!((b - 1.0 / 3.0).abs() < 1e-12);
                }
            }
            for id in 0..m.num_vertices() {
                let v = m.vertex(id);
                let (t, bary) = m.locate(v);
                let tri = m.triangle(t);
                let s: f64 = bary.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                let k = (0..3).max_by(|&a, &b| bary[a].total_cmp(&bary[b])).unwrap();
                assert!(bary[k] > 1.0 - 1e-12);
                assert_eq!(tri[k], id);
            }
        }
    }

    #[test]
    fn locate_wraps_outside_points() {
        let m = PeriodicMesh::build_uniform(4, 1.0).unwrap();
        let (t1, b1) = m.locate([1.1, -0.2]);
        let (t2, b2) = m.locate([0.1, 0.8]);
        assert_eq!(t1, t2);
        for k in 0..3 {
            assert!((b1[k] - b2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_reconstructs_the_point() {
        let m = PeriodicMesh::build_uniform(5, 1.3).unwrap();
        let pts = [[0.01, 0.02], [1.29, 1.29], [0.5, 0.77], [-0.4, 2.0]];
        for p in pts {
            let q = m.wrap(p);
            let (t, bary) = m.locate(p);
            let g = m.geometry(t);
            let mut r = [0.0, 0.0];
            for k in 0..3 {
                r[0] += bary[k] * g.corners[k][0];
                r[1] += bary[k] * g.corners[k][1];
            }
            assert!((r[0] - q[0]).abs() < 1e-12 * 1.3 && (r[1] - q[1]).abs() < 1e-12 * 1.3);
            assert!(bary.iter().all(|&b| (-1e-12..=1.0 + 1e-12).contains(&b)));
        }
    }
}
