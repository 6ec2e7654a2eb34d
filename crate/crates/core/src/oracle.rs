//! Dense brute-force assembly oracle: every form is accumulated into dense
//! matrices by direct numeric quadrature with a degree-6 rule, touching none
//! of the sparse assembly kernels. The self-test and the acceptance suite
//! compare the production matrices against these.

use crate::mesh::PeriodicMesh;
use crate::quadrature::twelve_point;

pub struct DenseForms {
    pub m_u: Vec<Vec<f64>>,
    pub stiffness: Vec<Vec<f64>>,
    pub a_sigma: Vec<Vec<f64>>,
    pub b_mix: Vec<Vec<f64>>,
    pub g_b: Vec<Vec<f64>>,
}

/// P1 basis gradient of local vertex `a` on triangle `t`, read from the mesh
/// geometry cache.
fn grad(mesh: &PeriodicMesh, t: usize, a: usize) -> [f64; 2] {
    mesh.geometry(t).grads[a]
}

pub fn dense_static(mesh: &PeriodicMesh, b: [f64; 2]) -> DenseForms {
    let n = mesh.num_vertices();
    let rule = twelve_point();
    let mut m_u = vec![vec![0.0; n]; n];
    let mut stiffness = vec![vec![0.0; n]; n];
    let mut a_sigma = vec![vec![0.0; 2 * n]; 2 * n];
    let mut b_mix = vec![vec![0.0; n]; 2 * n];
    let mut g_b = vec![vec![0.0; n]; n];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let area = mesh.geometry(t).area;
        for q in &rule {
            let w = area * q.weight;
            for a in 0..3 {
                let ia = tri[a];
                let ga = grad(mesh, t, a);
                let rot_a = |d: usize| if d == 0 { -ga[1] } else { ga[0] };
                for bb in 0..3 {
                    let jb = tri[bb];
                    let gb = grad(mesh, t, bb);
                    let rot_b = |e: usize| if e == 0 { -gb[1] } else { gb[0] };
                    m_u[ia][jb] += w * q.bary[a] * q.bary[bb];
                    stiffness[ia][jb] += w * (ga[0] * gb[0] + ga[1] * gb[1]);
                    g_b[ia][jb] += w * q.bary[a] * (b[0] * gb[0] + b[1] * gb[1]);
                    for d in 0..2 {
                        b_mix[2 * ia + d][jb] += w * q.bary[bb] * ga[d];
                        for e in 0..2 {
                            let mut v = w * (ga[d] * gb[e] + rot_a(d) * rot_b(e));
                            if d == e {
                                v += w * q.bary[a] * q.bary[bb];
                            }
                            a_sigma[2 * ia + d][2 * jb + e] += v;
                        }
                    }
                }
            }
        }
    }
    DenseForms {
        m_u,
        stiffness,
        a_sigma,
        b_mix,
        g_b,
    }
}

/// Dense convection form for a P1 vector field with interleaved
/// coefficients: entry (i, j) = int phi_j (sigma_h . grad phi_i).
pub fn dense_convection(mesh: &PeriodicMesh, sigma: &[f64]) -> Vec<Vec<f64>> {
    let n = mesh.num_vertices();
    let rule = twelve_point();
    let mut c = vec![vec![0.0; n]; n];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let area = mesh.geometry(t).area;
        for q in &rule {
            let w = area * q.weight;
            let mut sx = 0.0;
            let mut sy = 0.0;
            for a in 0..3 {
                sx += q.bary[a] * sigma[2 * tri[a]];
                sy += q.bary[a] * sigma[2 * tri[a] + 1];
            }
            for a in 0..3 {
                let ga = grad(mesh, t, a);
                let flow = sx * ga[0] + sy * ga[1];
                for bb in 0..3 {
                    c[tri[a]][tri[bb]] += w * q.bary[bb] * flow;
                }
            }
        }
    }
    c
}

/// Max-entry distance between a sparse matrix and a dense oracle matrix.
pub fn max_entry_gap(sparse: &crate::linalg::SparseMatrix, dense: &[Vec<f64>]) -> f64 {
    let mut gap = 0.0f64;
    for i in 0..sparse.nrows() {
        for j in 0..sparse.ncols() {
            gap = gap.max((sparse.get(i, j) - dense[i][j]).abs());
        }
    }
    gap
}
