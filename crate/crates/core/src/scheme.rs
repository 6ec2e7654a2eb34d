//! One full realization of the splitting scheme: per time step an explicit
//! sigma solve, a semi-implicit Crank-Nicolson density solve whose system
//! matrix carries the noise increment, and a mass-matrix recovery of the
//! concentration.
//!
//! The midpoint coupling keeps every step a linear solve: sigma at the
//! midpoint is averaged from the already-computed levels, so the density
//! system is linear in the new coefficients.

use crate::assembly::{project_scalar, project_vector, ConvectionAssembler, FormMatrices};
use crate::error::{Error, Result};
use crate::linalg::{
    dot, solve_bicgstab, solve_spd_guess, SolveReport, SparseLu, SparseMatrix,
};
use crate::mesh::PeriodicMesh;
use crate::norms::l2_disc;
use crate::stochastic::WienerPath;

/// Relative residual targets. The density solve is held to 1e-12 so the
/// mass-conservation identity is not polluted by solver error; sigma and c
/// only enter the error norms.
const SIGMA_TOL: f64 = 1e-10;
const U_TOL: f64 = 1e-12;
const C_TOL: f64 = 1e-11;
const U_FALLBACK_TOL: f64 = 1e-10;

/// Model parameters of the Stratonovich system
/// `du = [nu Lap u - chi div(u grad c)] dt + delta (b . grad u) o dW`.
///
/// The equivalent Ito form carries the extra drift
/// `(delta^2 / 2) div(B grad u)` with `B = b b^T`; the midpoint rule of the
/// stepper realizes the Stratonovich integral directly, so `B` never
/// appears in the discrete system.
#[derive(Debug, Clone, Copy)]
pub struct ModelParams {
    /// Cell diffusion.
    pub nu: f64,
    /// Chemotactic sensitivity.
    pub chi: f64,
    /// Noise intensity.
    pub delta: f64,
    /// Constant noise direction.
    pub b: [f64; 2],
    /// Spatial period.
    pub length: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::invalid("nu must be positive"));
        }
        if !(self.chi >= 0.0) || !(self.delta >= 0.0) {
            return Err(Error::invalid("chi and delta must be nonnegative"));
        }
        if !(self.length > 0.0) {
            return Err(Error::invalid("period must be positive"));
        }
        if !(self.b[0].is_finite() && self.b[1].is_finite()) {
            return Err(Error::invalid("noise direction must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Discretization {
    pub cells_per_side: usize,
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
}

impl Discretization {
    pub fn new(cells_per_side: usize, dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_final > 0.0) {
            return Err(Error::invalid("time step and horizon must be positive"));
        }
        let steps = (t_final / dt).round();
        if steps < 1.0 || (steps * dt - t_final).abs() > 1e-12 * t_final.max(1.0) {
            return Err(Error::invalid(format!(
                "horizon {t_final} is not an integer multiple of the step {dt}"
            )));
        }
        Ok(Discretization {
            cells_per_side,
            dt,
            t_final,
            steps: steps as usize,
        })
    }
}

/// Coefficient vectors at one time level. `sigma_prev` caches the previous
/// sigma for the midpoint average.
#[derive(Debug, Clone)]
pub struct SchemeState {
    pub m: usize,
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub c: Vec<f64>,
    pub sigma_prev: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    /// Discrete integral of u, conserved by the scheme.
    pub mass: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub l2_u: f64,
    pub sigma_solve: SolveReport,
    pub u_solve: SolveReport,
    pub c_solve: SolveReport,
}

/// Smooth periodic initial data with the analytic derivatives the weighted
/// sigma projection needs.
pub struct InitialData {
    pub u0: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub c0: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub grad_c0: Box<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>,
    pub laplacian_c0: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl InitialData {
    /// u0 = c0 = sin(pi x) sin(pi y), the data of the convergence tests.
    pub fn sine_product() -> Self {
        use std::f64::consts::PI;
        InitialData {
            u0: Box::new(|x, y| (PI * x).sin() * (PI * y).sin()),
            c0: Box::new(|x, y| (PI * x).sin() * (PI * y).sin()),
            grad_c0: Box::new(|x, y| {
                [
                    PI * (PI * x).cos() * (PI * y).sin(),
                    PI * (PI * x).sin() * (PI * y).cos(),
                ]
            }),
            laplacian_c0: Box::new(|x, y| -2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()),
        }
    }

    /// u0 = c0 = sin(2 pi x) sin(2 pi y): a fully periodic smooth field
    /// (the plain sine product has a gradient kink across the periodic
    /// seam, which caps spatial L2 rates near 1.5).
    pub fn smooth_periodic() -> Self {
        use std::f64::consts::PI;
        let w = 2.0 * PI;
        InitialData {
            u0: Box::new(move |x, y| (w * x).sin() * (w * y).sin()),
            c0: Box::new(move |x, y| (w * x).sin() * (w * y).sin()),
            grad_c0: Box::new(move |x, y| {
                [
                    w * (w * x).cos() * (w * y).sin(),
                    w * (w * x).sin() * (w * y).cos(),
                ]
            }),
            laplacian_c0: Box::new(move |x, y| {
                -2.0 * w * w * (w * x).sin() * (w * y).sin()
            }),
        }
    }

    /// Concentrated Gaussians for the blow-up study, centred at
    /// `(cx, cy)` in mesh coordinates: u0 = 1000 exp(-100 r^2),
    /// c0 = 500 exp(-50 r^2).
    pub fn gaussian_blowup(cx: f64, cy: f64) -> Self {
        let r2 = move |x: f64, y: f64| {
            let dx = x - cx;
            let dy = y - cy;
            dx * dx + dy * dy
        };
        InitialData {
            u0: Box::new(move |x, y| 1000.0 * (-100.0 * r2(x, y)).exp()),
            c0: Box::new(move |x, y| 500.0 * (-50.0 * r2(x, y)).exp()),
            grad_c0: Box::new(move |x, y| {
                let e = 500.0 * (-50.0 * r2(x, y)).exp();
                [-100.0 * (x - cx) * e, -100.0 * (y - cy) * e]
            }),
            laplacian_c0: Box::new(move |x, y| {
                let r = r2(x, y);
                500.0 * (-50.0 * r).exp() * (10_000.0 * r - 200.0)
            }),
        }
    }

    pub fn zero() -> Self {
        InitialData {
            u0: Box::new(|_, _| 0.0),
            c0: Box::new(|_, _| 0.0),
            grad_c0: Box::new(|_, _| [0.0, 0.0]),
            laplacian_c0: Box::new(|_, _| 0.0),
        }
    }
}

/// Projects the initial data: u0 through the plain L2 projection, sigma0 =
/// grad c0 through the weighted projection (its rot vanishes identically),
/// c0 through the L2 projection.
pub fn initialize(
    mesh: &PeriodicMesh,
    forms: &FormMatrices,
    data: &InitialData,
) -> Result<SchemeState> {
    let u = project_scalar(mesh, forms, &data.u0)?;
    let c = project_scalar(mesh, forms, &data.c0)?;
    let sigma = project_vector(mesh, forms, &data.grad_c0, &data.laplacian_c0, |_, _| 0.0)?;
    Ok(SchemeState {
        m: 0,
        u,
        sigma: sigma.clone(),
        c,
        sigma_prev: sigma,
    })
}

/// Precomputed per-(mesh, params, dt) machinery for the time loop. The
/// sigma operator never changes, so its factorization is computed once and
/// reused across every step and sample on this mesh.
pub struct Stepper<'a> {
    mesh: &'a PeriodicMesh,
    forms: &'a FormMatrices,
    params: ModelParams,
    disc: Discretization,
    conv: ConvectionAssembler,
    mass_vec: Vec<f64>,
    sigma_lu: SparseLu,
}

impl<'a> Stepper<'a> {
    pub fn new(
        mesh: &'a PeriodicMesh,
        forms: &'a FormMatrices,
        params: ModelParams,
        disc: Discretization,
    ) -> Result<Self> {
        params.validate()?;
        if disc.cells_per_side != mesh.cells_per_side() {
            return Err(Error::invalid("discretization/mesh mismatch"));
        }
        let sigma_lu = SparseLu::factorize(&forms.a_sigma)?;
        Ok(Stepper {
            mesh,
            forms,
            params,
            disc,
            conv: ConvectionAssembler::new(mesh),
            mass_vec: forms.mass_vector(),
            sigma_lu,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn disc(&self) -> &Discretization {
        &self.disc
    }

    /// Sigma solve: `A_sigma sigma_new = -B_mix u` through the cached
    /// factorization, with one refinement pass and the same residual
    /// contract the iterative path would have. The previous sigma is cached
    /// for the midpoint average.
    pub fn step_sigma(&self, state: &mut SchemeState) -> Result<SolveReport> {
        let mut rhs = self.forms.b_mix.spmv(&state.u)?;
        for v in &mut rhs {
            *v = -*v;
        }
        let (sigma, report) =
            solve_refined(&self.sigma_lu, &self.forms.a_sigma, &rhs, SIGMA_TOL)
                .map_err(|e| match e {
                    Error::SolveFailure { iterations, residual, .. } => Error::SolveFailure {
                        context: "sigma solve".into(),
                        iterations,
                        residual,
                    },
                    other => other,
                })?;
        state.sigma_prev = std::mem::replace(&mut state.sigma, sigma);
        Ok(report)
    }

    /// Density solve with the midpoint sigma and the noise increment in the
    /// system matrix:
    /// `[M + (k nu/2) K - (k chi/2) C - (delta dW/2) G] u_new =
    ///  [M - (k nu/2) K + (k chi/2) C + (delta dW/2) G] u_old`.
    pub fn step_u(&self, state: &mut SchemeState, dw: f64) -> Result<SolveReport> {
        let k = self.disc.dt;
        let visc = 0.5 * k * self.params.nu;
        let chem = 0.5 * k * self.params.chi;
        let noise = 0.5 * self.params.delta * dw;
        let forms = self.forms;
        let n = state.u.len();

        let conv = if self.params.chi != 0.0 {
            let sigma_mid: Vec<f64> = state
                .sigma
                .iter()
                .zip(&state.sigma_prev)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            Some(self.conv.assemble(self.mesh, &sigma_mid))
        } else {
            None
        };

        let mut rhs = forms.m_u.spmv(&state.u)?;
        forms.stiffness.spmv_acc(-visc, &state.u, &mut rhs);
        if let Some(c) = &conv {
            c.spmv_acc(chem, &state.u, &mut rhs);
        }
        if noise != 0.0 {
            forms.g_b.spmv_acc(noise, &state.u, &mut rhs);
        }

        let mut terms: Vec<(f64, &SparseMatrix)> =
            vec![(1.0, &forms.m_u), (visc, &forms.stiffness)];
        if let Some(c) = &conv {
            terms.push((-chem, c));
        }
        if noise != 0.0 {
            terms.push((-noise, &forms.g_b));
        }
        let lhs = SparseMatrix::lin_comb(&terms)?;

        let (u_new, report) = solve_bicgstab(&lhs, &rhs, &state.u, U_TOL, 30 * n + 300)?;
        let (u_new, report) = if report.converged {
            (u_new, report)
        } else {
            solve_u_direct(&lhs, &rhs)?
        };
        state.u = u_new;
        Ok(report)
    }

    /// Concentration recovery: `M c_new = B_div sigma_new + M u_new`.
    pub fn step_c(&self, state: &mut SchemeState) -> Result<SolveReport> {
        let mut rhs = self.forms.b_div.spmv(&state.sigma)?;
        let mu = self.forms.m_u.spmv(&state.u)?;
        for (r, v) in rhs.iter_mut().zip(&mu) {
            *r += v;
        }
        let n = rhs.len();
        let (c, report) =
            solve_spd_guess(&self.forms.m_u, &rhs, &state.c, C_TOL, 20 * n + 200)?;
        state.c = c;
        Ok(report)
    }

    /// One full step sigma -> u -> c; increments the time index.
    pub fn advance(&self, state: &mut SchemeState, dw: f64) -> Result<StepDiagnostics> {
        let sigma_solve = self.step_sigma(state)?;
        let u_solve = self.step_u(state, dw)?;
        let c_solve = self.step_c(state)?;
        state.m += 1;
        let mass = dot(&self.mass_vec, &state.u);
        let mut min_u = f64::INFINITY;
        let mut max_u = f64::NEG_INFINITY;
        for &v in &state.u {
            min_u = min_u.min(v);
            max_u = max_u.max(v);
        }
        Ok(StepDiagnostics {
            mass,
            min_u,
            max_u,
            l2_u: l2_disc(self.mesh, &state.u)?,
            sigma_solve,
            u_solve,
            c_solve,
        })
    }

    pub fn mass_of(&self, u: &[f64]) -> f64 {
        dot(&self.mass_vec, u)
    }
}

fn solve_u_direct(lhs: &SparseMatrix, rhs: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    let lu = SparseLu::factorize(lhs)?;
    solve_refined(&lu, lhs, rhs, U_FALLBACK_TOL)
        .map_err(|e| match e {
            Error::SolveFailure { iterations, residual, .. } => Error::SolveFailure {
                context: "density solve (direct fallback)".into(),
                iterations,
                residual,
            },
            other => other,
        })
}

/// Direct solve plus one iterative-refinement pass; keeps functionals of
/// the solution at roundoff accuracy.
fn solve_refined(
    lu: &SparseLu,
    a: &SparseMatrix,
    rhs: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, SolveReport)> {
    let mut x = lu.solve(rhs);
    let mut r = rhs.to_vec();
    a.spmv_acc(-1.0, &x, &mut r);
    let dx = lu.solve(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    let mut rt = rhs.to_vec();
    a.spmv_acc(-1.0, &x, &mut rt);
    let bn = crate::linalg::norm2(rhs);
    let rel = if bn > 0.0 {
        crate::linalg::norm2(&rt) / bn
    } else {
        crate::linalg::norm2(&rt)
    };
    let report = SolveReport {
        iterations: 0,
        residual: rel,
        converged: rel <= tol,
    };
    if !report.converged {
        return Err(Error::solve_failure("direct solve", &report));
    }
    Ok((x, report))
}

/// Observer invoked after every completed step with the new time index,
/// the time and the fresh state.
pub type Observer<'o> = dyn FnMut(usize, f64, &SchemeState, &StepDiagnostics) + 'o;

/// Runs the loop from the given initial state. The Wiener path must resolve
/// the time step; the first failing step aborts with its index and
/// increment attached.
pub fn run(
    stepper: &Stepper,
    mut state: SchemeState,
    path: &WienerPath,
    mut observer: Option<&mut Observer>,
) -> Result<(SchemeState, Vec<StepDiagnostics>)> {
    let disc = stepper.disc();
    let k = disc.dt;
    let mut series = Vec::with_capacity(disc.steps);
    for m in 0..disc.steps {
        let t0 = m as f64 * k;
        let t1 = (m + 1) as f64 * k;
        let dw = path.increment(t0, t1)?;
        let diag = stepper.advance(&mut state, dw).map_err(|e| Error::StepFailure {
            m,
            dw,
            source: Box::new(e),
        })?;
        if let Some(obs) = observer.as_deref_mut() {
            obs(m + 1, t1, &state, &diag);
        }
        series.push(diag);
    }
    Ok((state, series))
}

#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    pub kappa1: f64,
    pub criterion: f64,
    pub satisfied: bool,
}

/// The sufficient stability criterion `1 - 32 chi^2 C_L^4 T kappa1 / nu > 0`
/// with `kappa1 = ||u0||^2 + (3 chi^2 C_L^4 k / nu) ||u0||^4`. Advisory: the
/// Ladyzhenskaya constant has no published numeric value, so callers supply
/// one and the result is reported, never enforced.
pub fn check_stability_criterion(
    params: &ModelParams,
    t_final: f64,
    dt: f64,
    u0_l2: f64,
    c_l: f64,
) -> StabilityReport {
    let chi2 = params.chi * params.chi;
    let cl4 = c_l.powi(4);
    let kappa1 = u0_l2 * u0_l2 + (3.0 * chi2 * cl4 * dt / params.nu) * u0_l2.powi(4);
    let criterion = 1.0 - 32.0 * chi2 * cl4 * t_final * kappa1 / params.nu;
    StabilityReport {
        kappa1,
        criterion,
        satisfied: criterion > 0.0,
    }
}
