//! Built-in verification suites for the `selftest` subcommand: assembly
//! against the dense oracle, pathwise mass conservation, and the
//! Crank-Nicolson heat reduction.

use crate::assembly::{assemble_convection, assemble_static};
use crate::error::Result;
use crate::linalg::dot;
use crate::mesh::PeriodicMesh;
use crate::oracle::{dense_convection, dense_static, max_entry_gap};
use crate::scheme::{
    initialize, run, Discretization, InitialData, ModelParams, SchemeState, Stepper,
};
use crate::stochastic::WienerPath;
use rand_chacha::rand_core::{RngCore, SeedableRng};

pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all() -> Result<Vec<SuiteResult>> {
    Ok(vec![
        assembly_oracle()?,
        mass_conservation()?,
        heat_reduction()?,
    ])
}

fn assembly_oracle() -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for n in [2usize, 3, 4] {
        let mesh = PeriodicMesh::build_uniform(n, 1.0)?;
        let b = [0.7, -1.3];
        let forms = assemble_static(&mesh, b)?;
        let dense = dense_static(&mesh, b);
        worst = worst.max(max_entry_gap(&forms.m_u, &dense.m_u));
        worst = worst.max(max_entry_gap(&forms.stiffness, &dense.stiffness));
        worst = worst.max(max_entry_gap(&forms.a_sigma, &dense.a_sigma));
        worst = worst.max(max_entry_gap(&forms.b_mix, &dense.b_mix));
        worst = worst.max(max_entry_gap(&forms.g_b, &dense.g_b));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(n as u64);
        let sigma: Vec<f64> = (0..2 * mesh.num_vertices())
            .map(|_| (rng.next_u64() as f64 / u64::MAX as f64) - 0.5)
            .collect();
        let conv = assemble_convection(&mesh, &sigma)?;
        worst = worst.max(max_entry_gap(&conv, &dense_convection(&mesh, &sigma)));
    }
    Ok(SuiteResult {
        name: "assembly-oracle",
        passed: worst <= 1e-12,
        detail: format!("max entry gap {worst:.3e} (bound 1e-12)"),
    })
}

fn mass_conservation() -> Result<SuiteResult> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(321);
    let mut unit = || (rng.next_u64() as f64) / (u64::MAX as f64);
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let params = ModelParams {
            nu: 0.1 + 4.9 * unit(),
            chi: 0.1 + 4.9 * unit(),
            delta: 10.0 * unit(),
            b: [2.0 * unit() - 1.0, 2.0 * unit() - 1.0],
            length: 1.0,
        };
        let mesh = PeriodicMesh::build_uniform(8, 1.0)?;
        let forms = assemble_static(&mesh, params.b)?;
        let disc = Discretization::new(8, 1.0 / 64.0, 0.25)?;
        let state = initialize(&mesh, &forms, &InitialData::sine_product())?;
        let stepper = Stepper::new(&mesh, &forms, params, disc)?;
        let mass0 = stepper.mass_of(&state.u);
        let path = WienerPath::generate(1000 + trial, 0.25, 1.0 / 64.0)?;
        let (_, series) = run(&stepper, state, &path, None)?;
        for d in &series {
            worst = worst.max((d.mass - mass0).abs() / (1.0 + mass0.abs()));
        }
    }
    Ok(SuiteResult {
        name: "mass-conservation",
        passed: worst <= 1e-9,
        detail: format!("max relative drift {worst:.3e} (bound 1e-9)"),
    })
}

fn heat_reduction() -> Result<SuiteResult> {
    // delta = chi = 0: every translation mode is scaled by the
    // Crank-Nicolson symbol of the P1 pencil
    let params = ModelParams {
        nu: 1.0,
        chi: 0.0,
        delta: 0.0,
        b: [0.0, 0.0],
        length: 1.0,
    };
    let mesh = PeriodicMesh::build_uniform(4, 1.0)?;
    let forms = assemble_static(&mesh, params.b)?;
    let disc = Discretization::new(4, 1.0 / 8.0, 1.0)?;
    let stepper = Stepper::new(&mesh, &forms, params, disc)?;
    let n = mesh.num_vertices();
    let mut worst = 0.0f64;
    let nn = mesh.cells_per_side();
    for p in 0..nn {
        for q in 0..nn {
            for phase in [0.0, std::f64::consts::FRAC_PI_2] {
                let mode: Vec<f64> = (0..n)
                    .map(|v| {
                        let pt = mesh.vertex(v);
                        (2.0 * std::f64::consts::PI * (p as f64 * pt[0] + q as f64 * pt[1])
                            + phase)
                            .cos()
                    })
                    .collect();
                let norm = crate::linalg::norm2(&mode);
                if norm < 1e-8 {
                    continue;
                }
                let km = forms.stiffness.spmv(&mode)?;
                let mm = forms.m_u.spmv(&mode)?;
                let lambda = dot(&mode, &km) / dot(&mode, &mm);
                let mut state = SchemeState {
                    m: 0,
                    u: mode.clone(),
                    sigma: vec![0.0; 2 * n],
                    c: vec![0.0; n],
                    sigma_prev: vec![0.0; 2 * n],
                };
                stepper.step_u(&mut state, 0.0)?;
                let k = disc.dt;
                let rho = (1.0 - 0.5 * k * lambda) / (1.0 + 0.5 * k * lambda);
                for (new, old) in state.u.iter().zip(&mode) {
                    worst = worst.max((new - rho * old).abs());
                }
            }
        }
    }
    Ok(SuiteResult {
        name: "heat-reduction",
        passed: worst <= 1e-10,
        detail: format!("max amplification defect {worst:.3e} (bound 1e-10)"),
    })
}
