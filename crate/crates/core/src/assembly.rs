//! Assembly of the bilinear forms over the periodic P1 spaces: scalar mass
//! and stiffness, the sigma-space operator (vector mass + div-div +
//! rot-rot), the mixed divergence couplings, the constant-direction noise
//! form and the sigma-weighted convection form.
//!
//! Every integrand among P1 functions is a polynomial of degree at most
//! two per triangle, so the edge-midpoint rule makes the assembly
//! quadrature-exact. Initial-data projections use the six-point rule.
//!
//! Vector degrees of freedom are interleaved: dof `2 v` is the x-component
//! at vertex `v`, dof `2 v + 1` the y-component. The scalar rot convention
//! is `rot s = d s_2 / dx - d s_1 / dy`.

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, SparseMatrix};
use crate::mesh::PeriodicMesh;
use crate::quadrature::{physical_point, six_point, EDGE_MIDPOINT};

/// All time-independent matrices of the scheme on one mesh.
pub struct FormMatrices {
    /// Scalar mass (u, v).
    pub m_u: SparseMatrix,
    /// Scalar stiffness (grad u, grad v).
    pub stiffness: SparseMatrix,
    /// Vector-space operator (s, p) + (div s, div p) + (rot s, rot p).
    pub a_sigma: SparseMatrix,
    /// Coupling rows over vector dofs: entry (I, j) = (psi_j, div Phi_I).
    pub b_mix: SparseMatrix,
    /// Transpose-role coupling: entry (i, J) = (div Phi_J, psi_i).
    pub b_div: SparseMatrix,
    /// Noise form, entry (i, j) = (b . grad phi_j, phi_i).
    pub g_b: SparseMatrix,
    /// Polynomial degree the assembly rule integrates exactly.
    pub quad_degree: u32,
}

impl FormMatrices {
    /// Row sums of the scalar mass matrix; dotted with coefficients this is
    /// the discrete integral of the P1 function.
    pub fn mass_vector(&self) -> Vec<f64> {
        self.m_u.row_sums()
    }
}

/// rot of the vector basis function `phi_a e_d` on a triangle with
/// barycentric gradients `grads`.
#[inline]
fn rot_basis(grads: &[[f64; 2]; 3], a: usize, d: usize) -> f64 {
    if d == 0 {
        -grads[a][1]
    } else {
        grads[a][0]
    }
}

/// Assembles all time-independent matrices.
pub fn assemble_static(mesh: &PeriodicMesh, b: [f64; 2]) -> Result<FormMatrices> {
    if !(b[0].is_finite() && b[1].is_finite()) {
        return Err(Error::invalid("noise direction must be finite"));
    }
    let n = mesh.num_vertices();
    let nv = 2 * n;
    let ntri = mesh.num_triangles();
    let mut t_mass = Vec::with_capacity(9 * ntri);
    let mut t_stiff = Vec::with_capacity(9 * ntri);
    let mut t_sigma = Vec::with_capacity(36 * ntri);
    let mut t_mix = Vec::with_capacity(18 * ntri);
    let mut t_gb = Vec::with_capacity(9 * ntri);

    for t in 0..ntri {
        let tri = mesh.triangle(t);
        let geo = mesh.geometry(t);
        let area = geo.area;
        let g = &geo.grads;
        for a in 0..3 {
            let ia = tri[a];
            for bb in 0..3 {
                let jb = tri[bb];
                // exact P1 mass: area/6 on the diagonal, area/12 off it
                let mass = if a == bb { area / 6.0 } else { area / 12.0 };
                t_mass.push((ia, jb, mass));
                t_stiff.push((ia, jb, area * (g[a][0] * g[bb][0] + g[a][1] * g[bb][1])));
                // noise form: gradient on the trial index jb
                t_gb.push((ia, jb, (area / 3.0) * (b[0] * g[bb][0] + b[1] * g[bb][1])));
                for d in 0..2 {
                    let va = 2 * ia + d;
                    // mixed coupling (psi_j, div Phi_I)
                    t_mix.push((va, jb, (area / 3.0) * g[a][d]));
                    for e in 0..2 {
                        let vb = 2 * jb + e;
                        let mut val = area * (g[a][d] * g[bb][e]
                            + rot_basis(g, a, d) * rot_basis(g, bb, e));
                        if d == e {
                            val += mass;
                        }
                        t_sigma.push((va, vb, val));
                    }
                }
            }
        }
    }

    let m_u = SparseMatrix::from_triplets(n, n, &t_mass)?;
    let stiffness = SparseMatrix::from_triplets(n, n, &t_stiff)?;
    let a_sigma = SparseMatrix::from_triplets(nv, nv, &t_sigma)?;
    let b_mix = SparseMatrix::from_triplets(nv, n, &t_mix)?;
    let b_div = b_mix.transpose();
    let g_b = SparseMatrix::from_triplets(n, n, &t_gb)?;
    Ok(FormMatrices {
        m_u,
        stiffness,
        a_sigma,
        b_mix,
        b_div,
        g_b,
        quad_degree: 2,
    })
}

/// Local convection kernel shared by the triplet and pattern-reuse paths:
/// entries (test a, trial b) of `int phi_b (sigma_h . grad phi_a)` on one
/// triangle, with `sv` the sigma vertex values.
#[inline]
fn convection_local(area: f64, grads: &[[f64; 2]; 3], sv: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for q in EDGE_MIDPOINT {
        let w = area * q.weight;
        let sx = q.bary[0] * sv[0][0] + q.bary[1] * sv[1][0] + q.bary[2] * sv[2][0];
        let sy = q.bary[0] * sv[0][1] + q.bary[1] * sv[1][1] + q.bary[2] * sv[2][1];
        for a in 0..3 {
            let flow = sx * grads[a][0] + sy * grads[a][1];
            for bb in 0..3 {
                out[a][bb] += w * q.bary[bb] * flow;
            }
        }
    }
    out
}

/// Assembles the convection matrix C(sigma) with entries
/// `C[i, j] = int phi_j (sigma_h . grad phi_i)`.
pub fn assemble_convection(mesh: &PeriodicMesh, sigma: &[f64]) -> Result<SparseMatrix> {
    let n = mesh.num_vertices();
    if sigma.len() != 2 * n {
        return Err(Error::invalid(format!(
            "sigma coefficients: expected {}, got {}",
            2 * n,
            sigma.len()
        )));
    }
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let geo = mesh.geometry(t);
        let sv = [
            [sigma[2 * tri[0]], sigma[2 * tri[0] + 1]],
            [sigma[2 * tri[1]], sigma[2 * tri[1] + 1]],
            [sigma[2 * tri[2]], sigma[2 * tri[2] + 1]],
        ];
        let local = convection_local(geo.area, &geo.grads, &sv);
        for a in 0..3 {
            for bb in 0..3 {
                triplets.push((tri[a], tri[bb], local[a][bb]));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)
}

/// Pattern-reusing convection assembler for the time loop: the sparsity
/// pattern of C(sigma) is the fixed P1 stencil, so the slot of every local
/// entry can be precomputed once per mesh.
pub struct ConvectionAssembler {
    nrows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// value slot of local entry (t, a, b), flattened
    slots: Vec<usize>,
}

impl ConvectionAssembler {
    pub fn new(mesh: &PeriodicMesh) -> Self {
        let zero = assemble_convection(mesh, &vec![0.0; 2 * mesh.num_vertices()])
            .expect("pattern assembly cannot fail");
        // the zero-matrix run above produces the full stencil pattern because
        // from_triplets keeps explicit zeros
        let n = mesh.num_vertices();
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(zero.nnz());
        for i in 0..n {
            let (cols, _) = zero.row(i);
            col_idx.extend_from_slice(cols);
            row_ptr[i + 1] = col_idx.len();
        }
        let mut slots = Vec::with_capacity(9 * mesh.num_triangles());
        for t in 0..mesh.num_triangles() {
            let tri = mesh.triangle(t);
            for a in 0..3 {
                let i = tri[a];
                let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                for bb in 0..3 {
                    let j = tri[bb];
                    let off = cols.binary_search(&j).expect("stencil slot must exist");
                    slots.push(row_ptr[i] + off);
                }
            }
        }
        ConvectionAssembler {
            nrows: n,
            row_ptr,
            col_idx,
            slots,
        }
    }

    pub fn assemble(&self, mesh: &PeriodicMesh, sigma: &[f64]) -> SparseMatrix {
        debug_assert_eq!(sigma.len(), 2 * self.nrows);
        let mut values = vec![0.0f64; self.col_idx.len()];
        let mut slot = 0;
        for t in 0..mesh.num_triangles() {
            let tri = mesh.triangle(t);
            let geo = mesh.geometry(t);
            let sv = [
                [sigma[2 * tri[0]], sigma[2 * tri[0] + 1]],
                [sigma[2 * tri[1]], sigma[2 * tri[1] + 1]],
                [sigma[2 * tri[2]], sigma[2 * tri[2] + 1]],
            ];
            let local = convection_local(geo.area, &geo.grads, &sv);
            for a in 0..3 {
                for bb in 0..3 {
                    values[self.slots[slot]] += local[a][bb];
                    slot += 1;
                }
            }
        }
        SparseMatrix::from_csr(
            self.nrows,
            self.nrows,
            self.row_ptr.clone(),
            self.col_idx.clone(),
            values,
        )
    }
}

/// L2 projection of a pointwise function onto the scalar P1 space; the load
/// is integrated with the six-point rule.
pub fn project_scalar(
    mesh: &PeriodicMesh,
    forms: &FormMatrices,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    let n = mesh.num_vertices();
    let rule = six_point();
    let mut load = vec![0.0; n];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let geo = mesh.geometry(t);
        for q in &rule {
            let p = physical_point(&geo.corners, q.bary);
            let fv = f(p[0], p[1]) * geo.area * q.weight;
            for a in 0..3 {
                load[tri[a]] += fv * q.bary[a];
            }
        }
    }
    let (coeffs, _) = solve_spd(&forms.m_u, &load, 1e-12, 20 * n + 100)?;
    Ok(coeffs)
}

/// Weighted projection onto the vector P1 space: solves
/// `A_sigma x = (g, Phi) + (div g, div Phi) + (rot g, rot Phi)`.
/// Analytic divergence and rot of the data are required.
pub fn project_vector(
    mesh: &PeriodicMesh,
    forms: &FormMatrices,
    g: impl Fn(f64, f64) -> [f64; 2],
    div_g: impl Fn(f64, f64) -> f64,
    rot_g: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    let n = mesh.num_vertices();
    let rule = six_point();
    let mut load = vec![0.0; 2 * n];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let geo = mesh.geometry(t);
        let grads = &geo.grads;
        for q in &rule {
            let p = physical_point(&geo.corners, q.bary);
            let w = geo.area * q.weight;
            let gv = g(p[0], p[1]);
            let dv = div_g(p[0], p[1]);
            let rv = rot_g(p[0], p[1]);
            for a in 0..3 {
                for d in 0..2 {
                    load[2 * tri[a] + d] += w
                        * (gv[d] * q.bary[a] + dv * grads[a][d] + rv * rot_basis(grads, a, d));
                }
            }
        }
    }
    let (coeffs, _) = solve_spd(&forms.a_sigma, &load, 1e-12, 40 * n + 200)?;
    Ok(coeffs)
}
