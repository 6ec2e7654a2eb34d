//! Discrete norms, nested-mesh prolongation and the error functionals that
//! compare a coarse trajectory against a reference trajectory computed on
//! the refined mesh with a quarter of the time step.
//!
//! Error norms are evaluated on the fine mesh after prolongation, which is
//! exact for nested P1 spaces. The sigma error uses the equivalent H1 norm
//! `||s||^2 = ||s||^2 + ||div s||^2 + ||rot s||^2`.

use crate::error::{Error, Result};
use crate::mesh::PeriodicMesh;

/// Coefficient snapshots of one run at its comparison times.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub cells_per_side: usize,
}

impl TrajectoryRecord {
    /// Binary snapshot dump (little-endian f64 payload), used by the
    /// reference-trajectory cache.
    pub fn dump(&self, w: &mut impl std::io::Write) -> Result<()> {
        w.write_all(b"SKST")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.cells_per_side as u64).to_le_bytes())?;
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        let widths = match self.times.len() {
            0 => (0u64, 0u64, 0u64),
            _ => (
                self.u[0].len() as u64,
                self.sigma[0].len() as u64,
                self.c[0].len() as u64,
            ),
        };
        w.write_all(&widths.0.to_le_bytes())?;
        w.write_all(&widths.1.to_le_bytes())?;
        w.write_all(&widths.2.to_le_bytes())?;
        for (i, &t) in self.times.iter().enumerate() {
            w.write_all(&t.to_le_bytes())?;
            for v in self.u[i].iter().chain(&self.sigma[i]).chain(&self.c[i]) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(r: &mut impl std::io::Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SKST" {
            return Err(Error::invalid("not a trajectory dump"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 1 {
            return Err(Error::invalid("unsupported trajectory dump version"));
        }
        let mut b8 = [0u8; 8];
        let mut read_u64 = |r: &mut dyn std::io::Read| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let cells = read_u64(r)? as usize;
        let count = read_u64(r)? as usize;
        let wu = read_u64(r)? as usize;
        let ws = read_u64(r)? as usize;
        let wc = read_u64(r)? as usize;
        let mut rec = TrajectoryRecord::new(cells);
        let mut buf8 = [0u8; 8];
        let mut read_f64 = |r: &mut dyn std::io::Read| -> Result<f64> {
            r.read_exact(&mut buf8)?;
            Ok(f64::from_le_bytes(buf8))
        };
        for _ in 0..count {
            let t = read_f64(r)?;
            let mut u = Vec::with_capacity(wu);
            for _ in 0..wu {
                u.push(read_f64(r)?);
            }
            let mut sigma = Vec::with_capacity(ws);
            for _ in 0..ws {
                sigma.push(read_f64(r)?);
            }
            let mut c = Vec::with_capacity(wc);
            for _ in 0..wc {
                c.push(read_f64(r)?);
            }
            rec.times.push(t);
            rec.u.push(u);
            rec.sigma.push(sigma);
            rec.c.push(c);
        }
        Ok(rec)
    }

    pub fn new(cells_per_side: usize) -> Self {
        TrajectoryRecord {
            times: Vec::new(),
            u: Vec::new(),
            sigma: Vec::new(),
            c: Vec::new(),
            cells_per_side,
        }
    }

    pub fn push(&mut self, t: f64, u: &[f64], sigma: &[f64], c: &[f64]) {
        if let Some(&last) = self.times.last() {
            assert!(t > last, "snapshot times must increase");
        }
        self.times.push(t);
        self.u.push(u.to_vec());
        self.sigma.push(sigma.to_vec());
        self.c.push(c.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Evaluates the coarse P1 function at every fine vertex. Exact on nested
/// meshes: a coarse P1 function is a fine P1 function.
pub fn prolong_scalar(
    coarse_mesh: &PeriodicMesh,
    coarse: &[f64],
    fine_mesh: &PeriodicMesh,
) -> Result<Vec<f64>> {
    if !fine_mesh.is_refinement_of(coarse_mesh) {
        return Err(Error::invalid("prolongation requires the nested refinement"));
    }
    if coarse.len() != coarse_mesh.num_vertices() {
        return Err(Error::invalid("coarse coefficient length mismatch"));
    }
    Ok(fine_mesh
        .vertices()
        .iter()
        .map(|&v| coarse_mesh.eval_p1(coarse, v))
        .collect())
}

/// Componentwise prolongation of interleaved vector coefficients.
pub fn prolong_vector(
    coarse_mesh: &PeriodicMesh,
    coarse: &[f64],
    fine_mesh: &PeriodicMesh,
) -> Result<Vec<f64>> {
    if !fine_mesh.is_refinement_of(coarse_mesh) {
        return Err(Error::invalid("prolongation requires the nested refinement"));
    }
    let n = coarse_mesh.num_vertices();
    if coarse.len() != 2 * n {
        return Err(Error::invalid("coarse vector coefficient length mismatch"));
    }
    let xs: Vec<f64> = (0..n).map(|v| coarse[2 * v]).collect();
    let ys: Vec<f64> = (0..n).map(|v| coarse[2 * v + 1]).collect();
    let mut out = vec![0.0; 2 * fine_mesh.num_vertices()];
    for (v, &p) in fine_mesh.vertices().iter().enumerate() {
        out[2 * v] = coarse_mesh.eval_p1(&xs, p);
        out[2 * v + 1] = coarse_mesh.eval_p1(&ys, p);
    }
    Ok(out)
}

/// Element-local P1 mass quadratic form: `int (u_h)^2` over one triangle with
/// nodal values `u`.
#[inline]
fn local_mass_sq(area: f64, u: [f64; 3]) -> f64 {
    let diag = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    let cross = u[0] * u[1] + u[0] * u[2] + u[1] * u[2];
    area * (diag / 6.0 + cross / 6.0)
}

/// Discrete L2 norm `sqrt(x^T M x)` computed by element loops.
pub fn l2_disc(mesh: &PeriodicMesh, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != mesh.num_vertices() {
        return Err(Error::invalid("coefficient length mismatch"));
    }
    let mut acc = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let area = mesh.geometry(t).area;
        acc += local_mass_sq(area, [coeffs[tri[0]], coeffs[tri[1]], coeffs[tri[2]]]);
    }
    Ok(acc.max(0.0).sqrt())
}

/// Discrete H1-equivalent norm of an interleaved vector field:
/// `sqrt(||s||^2 + ||div s||^2 + ||rot s||^2)`.
pub fn h1_equiv_disc(mesh: &PeriodicMesh, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != 2 * mesh.num_vertices() {
        return Err(Error::invalid("vector coefficient length mismatch"));
    }
    let mut acc = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let geo = mesh.geometry(t);
        let g = &geo.grads;
        let sx = [coeffs[2 * tri[0]], coeffs[2 * tri[1]], coeffs[2 * tri[2]]];
        let sy = [
            coeffs[2 * tri[0] + 1],
            coeffs[2 * tri[1] + 1],
            coeffs[2 * tri[2] + 1],
        ];
        let mut div = 0.0;
        let mut rot = 0.0;
        for a in 0..3 {
            div += sx[a] * g[a][0] + sy[a] * g[a][1];
            rot += sy[a] * g[a][0] - sx[a] * g[a][1];
        }
        acc += local_mass_sq(geo.area, sx)
            + local_mass_sq(geo.area, sy)
            + geo.area * (div * div + rot * rot);
    }
    Ok(acc.max(0.0).sqrt())
}

/// Pathwise error between a coarse trajectory and its reference on the
/// refined mesh: max over the shared (coarse) times, u and c in the
/// discrete L2 norm, sigma in the H1-equivalent norm, evaluated on the
/// fine mesh after prolongation.
pub fn path_error(
    coarse: &TrajectoryRecord,
    reference: &TrajectoryRecord,
    coarse_mesh: &PeriodicMesh,
    fine_mesh: &PeriodicMesh,
) -> Result<(f64, f64, f64)> {
    if !fine_mesh.is_refinement_of(coarse_mesh) {
        return Err(Error::invalid("reference mesh must be the refinement"));
    }
    if coarse.cells_per_side != coarse_mesh.cells_per_side()
        || reference.cells_per_side != fine_mesh.cells_per_side()
    {
        return Err(Error::invalid("trajectory/mesh identity mismatch"));
    }
    let mut err_u = 0.0f64;
    let mut err_c = 0.0f64;
    let mut err_s = 0.0f64;
    for (idx, &t) in coarse.times.iter().enumerate() {
        if idx == 0 {
            continue; // the error norms run over 1 <= m <= M
        }
        let rdx = find_time(&reference.times, t)?;
        let up = prolong_scalar(coarse_mesh, &coarse.u[idx], fine_mesh)?;
        let cp = prolong_scalar(coarse_mesh, &coarse.c[idx], fine_mesh)?;
        let sp = prolong_vector(coarse_mesh, &coarse.sigma[idx], fine_mesh)?;
        let du: Vec<f64> = up.iter().zip(&reference.u[rdx]).map(|(a, b)| a - b).collect();
        let dc: Vec<f64> = cp.iter().zip(&reference.c[rdx]).map(|(a, b)| a - b).collect();
        let ds: Vec<f64> = sp
            .iter()
            .zip(&reference.sigma[rdx])
            .map(|(a, b)| a - b)
            .collect();
        err_u = err_u.max(l2_disc(fine_mesh, &du)?);
        err_c = err_c.max(l2_disc(fine_mesh, &dc)?);
        err_s = err_s.max(h1_equiv_disc(fine_mesh, &ds)?);
    }
    Ok((err_u, err_c, err_s))
}

fn find_time(times: &[f64], t: f64) -> Result<usize> {
    let tol = 1e-12 * t.abs().max(1.0);
    times
        .iter()
        .position(|&s| (s - t).abs() <= tol)
        .ok_or_else(|| Error::invalid(format!("reference trajectory misses time {t}")))
}

/// Root-mean of squared per-sample errors, the Monte Carlo aggregation of
/// the strong error.
pub fn mc_aggregate(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::invalid("monte carlo aggregation of no samples"));
    }
    let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
    Ok(mean_sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_static, project_scalar};
    use rand_chacha::rand_core::{RngCore, SeedableRng};

    fn rand_vec(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| (rng.next_u64() as f64 / u64::MAX as f64) - 0.5)
            .collect()
    }

    #[test]
    fn constants_have_norm_kappa_times_length() {
        let mesh = PeriodicMesh::build_uniform(4, 1.0).unwrap();
        let c = vec![3.0; mesh.num_vertices()];
        let v = l2_disc(&mesh, &c).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        let mesh2 = PeriodicMesh::build_uniform(4, 2.0).unwrap();
        let c2 = vec![3.0; mesh2.num_vertices()];
        assert!((l2_disc(&mesh2, &c2).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_vector_field_has_unit_h1_norm() {
        let mesh = PeriodicMesh::build_uniform(4, 1.0).unwrap();
        let mut s = vec![0.0; 2 * mesh.num_vertices()];
        for v in 0..mesh.num_vertices() {
            s[2 * v] = 1.0;
        }
        assert!((h1_equiv_disc(&mesh, &s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projected_fourier_mode_matches_continuum_norm() {
        let mesh = PeriodicMesh::build_uniform(32, 1.0).unwrap();
        let forms = assemble_static(&mesh, [0.0, 0.0]).unwrap();
        let u = project_scalar(&mesh, &forms, |x, _| (2.0 * std::f64::consts::PI * x).sin())
            .unwrap();
        let v = l2_disc(&mesh, &u).unwrap();
        let want = 1.0 / 2.0f64.sqrt();
        assert!((v - want).abs() < 0.02 * want, "got {v}, want about {want}");
        // cross-check the quadratic form against degree-6 quadrature
        let rule = crate::quadrature::twelve_point();
        let mut acc = 0.0;
        for t in 0..mesh.num_triangles() {
            let tri = mesh.triangle(t);
            let geo = mesh.geometry(t);
            for q in &rule {
                let uh = q.bary[0] * u[tri[0]] + q.bary[1] * u[tri[1]] + q.bary[2] * u[tri[2]];
                acc += geo.area * q.weight * uh * uh;
            }
        }
        assert!((acc.sqrt() - v).abs() < 1e-12);
    }

    #[test]
    fn prolongation_is_exact_on_nested_meshes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in [2usize, 3, 8, 16] {
            let coarse = PeriodicMesh::build_uniform(n, 1.0).unwrap();
            let fine = coarse.refine().unwrap();
            let u = rand_vec(&mut rng, coarse.num_vertices());
            let up = prolong_scalar(&coarse, &u, &fine).unwrap();
            // restriction to coarse vertices is the identity
            for (v, &p) in coarse.vertices().iter().enumerate() {
                let fv = fine
                    .vertices()
                    .iter()
                    .position(|w| (w[0] - p[0]).abs() < 1e-14 && (w[1] - p[1]).abs() < 1e-14)
                    .unwrap();
                assert!((up[fv] - u[v]).abs() < 1e-13);
            }
            // the prolonged function equals the coarse one in the fine L2 norm
            let mut max_gap = 0.0f64;
            for t in 0..fine.num_triangles() {
                let geo = fine.geometry(t);
                let cx = (geo.corners[0][0] + geo.corners[1][0] + geo.corners[2][0]) / 3.0;
                let cy = (geo.corners[0][1] + geo.corners[1][1] + geo.corners[2][1]) / 3.0;
                let coarse_val = coarse.eval_p1(&u, [cx, cy]);
                let fine_val = fine.eval_p1(&up, [cx, cy]);
                max_gap = max_gap.max((coarse_val - fine_val).abs());
            }
            assert!(max_gap < 1e-13, "n={n}: prolongation gap {max_gap}");
        }
    }

    #[test]
    fn prolongation_of_constants() {
        let coarse = PeriodicMesh::build_uniform(2, 1.0).unwrap();
        let fine = coarse.refine().unwrap();
        let up = prolong_scalar(&coarse, &vec![2.5; 4], &fine).unwrap();
        assert!(up.iter().all(|&v| (v - 2.5).abs() < 1e-14));
        // non-nested meshes are rejected
        let other = PeriodicMesh::build_uniform(3, 1.0).unwrap();
        assert!(prolong_scalar(&coarse, &vec![0.0; 4], &other).is_err());
    }

    #[test]
    fn mc_aggregate_examples() {
        assert!((mc_aggregate(&[3.0, 4.0]).unwrap() - (12.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(mc_aggregate(&[7.0]).unwrap(), 7.0);
        let e = mc_aggregate(&[2.0, 2.0, 2.0]).unwrap();
        assert!((e - 2.0).abs() < 1e-15);
        assert!(mc_aggregate(&[]).is_err());
        // monotone in each sample and homogeneous under scaling
        let a = mc_aggregate(&[1.0, 2.0, 3.0]).unwrap();
        let b = mc_aggregate(&[1.0, 2.5, 3.0]).unwrap();
        assert!(b > a);
        let c = mc_aggregate(&[2.0, 4.0, 6.0]).unwrap();
        assert!((c - 2.0 * a).abs() < 1e-14);
    }

    #[test]
    fn trajectory_dump_load_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut rec = TrajectoryRecord::new(2);
        for step in 0..3 {
            rec.push(
                step as f64 * 0.5,
                &rand_vec(&mut rng, 4),
                &rand_vec(&mut rng, 8),
                &rand_vec(&mut rng, 4),
            );
        }
        let mut buf = Vec::new();
        rec.dump(&mut buf).unwrap();
        let back = TrajectoryRecord::load(&mut buf.as_slice()).unwrap();
        assert_eq!(back.cells_per_side, 2);
        assert_eq!(back.times, rec.times);
        assert_eq!(back.u, rec.u);
        assert_eq!(back.sigma, rec.sigma);
        assert_eq!(back.c, rec.c);
        assert!(TrajectoryRecord::load(&mut &b"junk"[..]).is_err());
    }

    #[test]
    fn path_error_identical_trajectories_vanish() {
        let coarse_mesh = PeriodicMesh::build_uniform(2, 1.0).unwrap();
        let fine_mesh = coarse_mesh.refine().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut coarse = TrajectoryRecord::new(2);
        let mut refr = TrajectoryRecord::new(4);
        for step in 0..3 {
            let t = step as f64 * 0.25;
            let u = rand_vec(&mut rng, 4);
            let s = rand_vec(&mut rng, 8);
            let c = rand_vec(&mut rng, 4);
            let up = prolong_scalar(&coarse_mesh, &u, &fine_mesh).unwrap();
            let sp = prolong_vector(&coarse_mesh, &s, &fine_mesh).unwrap();
            let cp = prolong_scalar(&coarse_mesh, &c, &fine_mesh).unwrap();
            coarse.push(t, &u, &s, &c);
            refr.push(t, &up, &sp, &cp);
        }
        let (eu, ec, es) = path_error(&coarse, &refr, &coarse_mesh, &fine_mesh).unwrap();
        assert!(eu < 1e-12 && ec < 1e-12 && es < 1e-12);
    }

    #[test]
    fn path_error_constant_offset() {
        // coarse = ref + eps in u at one time gives err_u = eps * L
        let coarse_mesh = PeriodicMesh::build_uniform(2, 1.0).unwrap();
        let fine_mesh = coarse_mesh.refine().unwrap();
        let mut coarse = TrajectoryRecord::new(2);
        let mut refr = TrajectoryRecord::new(4);
        let eps = 0.01;
        for step in 0..3 {
            let t = step as f64 * 0.5;
            let mut u = vec![0.0; 4];
            if step == 2 {
                u.iter_mut().for_each(|v| *v = eps);
            }
            let s = vec![0.0; 8];
            let c = vec![0.0; 4];
            coarse.push(t, &u, &s, &c);
            refr.push(t, &vec![0.0; 16], &vec![0.0; 32], &vec![0.0; 16]);
        }
        let (eu, ec, es) = path_error(&coarse, &refr, &coarse_mesh, &fine_mesh).unwrap();
        assert!((eu - eps).abs() < 1e-13);
        assert!(ec < 1e-14 && es < 1e-14);
    }

    #[test]
    fn path_error_offset_invariance() {
        let coarse_mesh = PeriodicMesh::build_uniform(3, 1.0).unwrap();
        let fine_mesh = coarse_mesh.refine().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let n = coarse_mesh.num_vertices();
        let build = |rng: &mut rand_chacha::ChaCha8Rng, offset_u: &[f64], offset_s: &[f64]| {
            let mut coarse = TrajectoryRecord::new(3);
            let mut refr = TrajectoryRecord::new(6);
            let mut r2 = rng.clone();
            for step in 0..4 {
                let t = step as f64;
                let mut u = rand_vec(&mut r2, n);
                let mut s = rand_vec(&mut r2, 2 * n);
                let c = rand_vec(&mut r2, n);
                let ur = rand_vec(&mut r2, fine_mesh.num_vertices());
                let sr = rand_vec(&mut r2, 2 * fine_mesh.num_vertices());
                let cr = rand_vec(&mut r2, fine_mesh.num_vertices());
                for (a, b) in u.iter_mut().zip(offset_u) {
                    *a += b;
                }
                for (a, b) in s.iter_mut().zip(offset_s) {
                    *a += b;
                }
                let mut ur2 = ur.clone();
                let up = prolong_scalar(&coarse_mesh, offset_u, &fine_mesh).unwrap();
                for (a, b) in ur2.iter_mut().zip(&up) {
                    *a += b;
                }
                let mut sr2 = sr.clone();
                let sp = prolong_vector(&coarse_mesh, offset_s, &fine_mesh).unwrap();
                for (a, b) in sr2.iter_mut().zip(&sp) {
                    *a += b;
                }
                coarse.push(t, &u, &s, &c);
                refr.push(t, &ur2, &sr2, &cr);
            }
            path_error(&coarse, &refr, &coarse_mesh, &fine_mesh).unwrap()
        };
        let off_u = rand_vec(&mut rng, n);
        let off_s = rand_vec(&mut rng, 2 * n);
        let zero_u = vec![0.0; n];
        let zero_s = vec![0.0; 2 * n];
        let base = build(&mut rng.clone(), &zero_u, &zero_s);
        let shifted = build(&mut rng.clone(), &off_u, &off_s);
        assert!((base.0 - shifted.0).abs() < 1e-10);
        assert!((base.2 - shifted.2).abs() < 1e-10);
    }
}
