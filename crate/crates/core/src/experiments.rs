//! Drivers for the numerical studies: paired coarse/reference Monte Carlo
//! runs on coupled Wiener paths, rate fitting, error-inflation scans and
//! blow-up field capture.
//!
//! Within one sample every level consumes the same path (seed = base + j,
//! path drawn once at the finest resolution the experiment needs), and the
//! reference run on (2N, k/4) shares every coarse step time, which is what
//! makes the aggregated difference a strong-error estimate.

use crate::assembly::{assemble_static, FormMatrices};
use crate::config::{ExperimentConfig, InitialDataKind};
use crate::error::{Error, Result};
use crate::mesh::PeriodicMesh;
use crate::norms::{mc_aggregate, path_error, TrajectoryRecord};
use crate::scheme::{
    check_stability_criterion, initialize, run, Discretization, InitialData, SchemeState,
    Stepper,
};
use crate::stochastic::WienerPath;
use rayon::prelude::*;
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct LevelResult {
    pub n: usize,
    pub h: f64,
    pub k: f64,
    pub err_u: f64,
    pub err_c: f64,
    pub err_sigma: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub levels: Vec<LevelResult>,
    pub rate_u: Option<f64>,
    pub rate_c: Option<f64>,
    pub rate_sigma: Option<f64>,
    pub samples: usize,
    pub base_seed: u64,
    pub wall_seconds: f64,
}

impl ErrorReport {
    pub fn total_excluded(&self) -> usize {
        self.levels.iter().map(|l| l.excluded).sum()
    }
}

fn initial_data(kind: InitialDataKind, length: f64) -> InitialData {
    match kind {
        InitialDataKind::SineProduct => InitialData::sine_product(),
        InitialDataKind::SmoothPeriodic => InitialData::smooth_periodic(),
        InitialDataKind::GaussianBlowup => InitialData::gaussian_blowup(length / 2.0, length / 2.0),
        InitialDataKind::Zero => InitialData::zero(),
    }
}

/// Advisory check of the sufficient stability criterion (the Ladyzhenskaya
/// constant is taken as 1); warns and continues, never aborts.
fn warn_stability(
    params: &crate::scheme::ModelParams,
    t_final: f64,
    k: f64,
    mesh: &PeriodicMesh,
    u0: &[f64],
) -> Result<()> {
    let u0_l2 = crate::norms::l2_disc(mesh, u0)?;
    let stab = check_stability_criterion(params, t_final, k, u0_l2, 1.0);
    if !stab.satisfied {
        eprintln!(
            "note: sufficient stability criterion not met (value {:.3}, C_L = 1); continuing",
            stab.criterion
        );
    }
    Ok(())
}

struct LevelContext {
    coarse_mesh: PeriodicMesh,
    coarse_forms: FormMatrices,
    coarse_disc: Discretization,
    ref_mesh: PeriodicMesh,
    ref_forms: FormMatrices,
    ref_disc: Discretization,
    state0_coarse: SchemeState,
    state0_ref: SchemeState,
}

fn build_level(cfg: &ExperimentConfig, n: usize, k: f64) -> Result<LevelContext> {
    let params = cfg.model_params();
    let data = initial_data(cfg.initial_data, params.length);
    let coarse_mesh = PeriodicMesh::build_uniform(n, params.length)?;
    let coarse_forms = assemble_static(&coarse_mesh, params.b)?;
    let coarse_disc = Discretization::new(n, k, cfg.t_final)?;
    let ref_mesh = coarse_mesh.refine()?;
    let ref_forms = assemble_static(&ref_mesh, params.b)?;
    let ref_disc = Discretization::new(2 * n, k / 4.0, cfg.t_final)?;
    let state0_coarse = initialize(&coarse_mesh, &coarse_forms, &data)?;
    let state0_ref = initialize(&ref_mesh, &ref_forms, &data)?;
    Ok(LevelContext {
        coarse_mesh,
        coarse_forms,
        coarse_disc,
        ref_mesh,
        ref_forms,
        ref_disc,
        state0_coarse,
        state0_ref,
    })
}

/// Runs one realization capturing snapshots every `stride` steps (plus the
/// initial state).
fn run_captured(
    stepper: &Stepper,
    state0: &SchemeState,
    path: &WienerPath,
    stride: usize,
) -> Result<TrajectoryRecord> {
    let mut record = TrajectoryRecord::new(stepper.disc().cells_per_side);
    record.push(0.0, &state0.u, &state0.sigma, &state0.c);
    let mut observer = |m: usize, t: f64, s: &SchemeState, _d: &crate::scheme::StepDiagnostics| {
        if m % stride == 0 {
            record.push(t, &s.u, &s.sigma, &s.c);
        }
    };
    run(stepper, state0.clone(), path, Some(&mut observer))?;
    Ok(record)
}

/// The effective Wiener resolution: the configured k0 capped by the finest
/// step the experiment uses (the reference step k/4 of the finest level).
fn effective_k0(cfg: &ExperimentConfig) -> f64 {
    let mut k0 = cfg.k0;
    for l in &cfg.levels {
        k0 = k0.min(l.k / 4.0);
    }
    k0
}

/// FNV-1a over the canonical determinant string of a cached reference run.
fn cache_key(cfg: &ExperimentConfig, level: &crate::config::LevelConfig, seed: u64, k0: f64) -> u64 {
    let p = &cfg.params;
    let canon = format!(
        "v1|{}|nu={:?}|chi={:?}|delta={:?}|b={:?},{:?}|L={:?}|n={}|k={:?}|T={:?}|seed={}|k0={:?}|data={:?}",
        crate::stochastic::GENERATOR_ID,
        p.nu, p.chi, p.delta, p.b[0], p.b[1], p.length,
        level.n, level.k, cfg.t_final, seed, k0, cfg.initial_data,
    );
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canon.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

fn cache_load(dir: &str, key: u64) -> Option<TrajectoryRecord> {
    let path = std::path::Path::new(dir).join(format!("ref_{key:016x}.bin"));
    let mut f = std::fs::File::open(path).ok()?;
    TrajectoryRecord::load(&mut f).ok()
}

fn cache_store(dir: &str, key: u64, record: &TrajectoryRecord) {
    let dirp = std::path::Path::new(dir);
    if std::fs::create_dir_all(dirp).is_err() {
        return;
    }
    let tmp = dirp.join(format!("ref_{key:016x}.tmp.{}", std::process::id()));
    let finalp = dirp.join(format!("ref_{key:016x}.bin"));
    if let Ok(mut f) = std::fs::File::create(&tmp) {
        if record.dump(&mut f).is_ok() && f.sync_all().is_ok() {
            let _ = std::fs::rename(&tmp, &finalp);
        } else {
            let _ = std::fs::remove_file(&tmp);
        }
    }
}

fn paired_levels_study(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    if cfg.levels.is_empty() {
        return Err(Error::Config("study needs at least one level".into()));
    }
    let start = Instant::now();
    let params = cfg.model_params();
    let contexts: Vec<LevelContext> = cfg
        .levels
        .iter()
        .map(|l| build_level(cfg, l.n, l.k))
        .collect::<Result<_>>()?;

    // advisory stability report on the coarsest level
    warn_stability(
        &params,
        cfg.t_final,
        cfg.levels[0].k,
        &contexts[0].coarse_mesh,
        &contexts[0].state0_coarse.u,
    )?;

    let k0 = effective_k0(cfg);
    let per_sample: Vec<Vec<Option<(f64, f64, f64)>>> = (0..cfg.samples)
        .into_par_iter()
        .map(|j| -> Result<Vec<Option<(f64, f64, f64)>>> {
            let seed = cfg.base_seed.wrapping_add(j as u64);
            let path = WienerPath::generate(seed, cfg.t_final, k0)?;
            let mut out = Vec::with_capacity(contexts.len());
            for (ctx, lcfg) in contexts.iter().zip(&cfg.levels) {
                let coarse_stepper = Stepper::new(
                    &ctx.coarse_mesh,
                    &ctx.coarse_forms,
                    params,
                    ctx.coarse_disc,
                )?;
                let coarse = run_captured(&coarse_stepper, &ctx.state0_coarse, &path, 1);
                let key = cache_key(cfg, lcfg, seed, k0);
                let cached = cfg
                    .cache_dir
                    .as_deref()
                    .and_then(|dir| cache_load(dir, key))
                    .filter(|r| {
                        r.cells_per_side == ctx.ref_disc.cells_per_side
                            && r.len() == ctx.coarse_disc.steps + 1
                    });
                let reference = match cached {
                    Some(r) => Ok(r),
                    None => {
                        let ref_stepper =
                            Stepper::new(&ctx.ref_mesh, &ctx.ref_forms, params, ctx.ref_disc)?;
                        let rec = run_captured(&ref_stepper, &ctx.state0_ref, &path, 4);
                        if let (Ok(rec), Some(dir)) = (&rec, cfg.cache_dir.as_deref()) {
                            cache_store(dir, key, rec);
                        }
                        rec
                    }
                };
                match (coarse, reference) {
                    (Ok(c), Ok(r)) => {
                        let errs = path_error(&c, &r, &ctx.coarse_mesh, &ctx.ref_mesh)?;
                        out.push(Some(errs));
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        eprintln!("warning: sample {j} excluded at n={}: {e}", ctx.coarse_disc.cells_per_side);
                        out.push(None);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut levels = Vec::with_capacity(contexts.len());
    for (li, lcfg) in cfg.levels.iter().enumerate() {
        let mut eu = Vec::new();
        let mut ec = Vec::new();
        let mut es = Vec::new();
        let mut excluded = 0usize;
        for sample in &per_sample {
            match sample[li] {
                Some((u, c, s)) => {
                    eu.push(u);
                    ec.push(c);
                    es.push(s);
                }
                None => excluded += 1,
            }
        }
        if eu.is_empty() {
            return Err(Error::Config(format!(
                "all samples excluded at level n = {}",
                lcfg.n
            )));
        }
        levels.push(LevelResult {
            n: lcfg.n,
            h: params.length / lcfg.n as f64,
            k: lcfg.k,
            err_u: mc_aggregate(&eu)?,
            err_c: mc_aggregate(&ec)?,
            err_sigma: mc_aggregate(&es)?,
            excluded,
        });
    }
    Ok(ErrorReport {
        levels,
        rate_u: None,
        rate_c: None,
        rate_sigma: None,
        samples: cfg.samples,
        base_seed: cfg.base_seed,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Convergence study: paired runs per level plus least-squares rate fits in
/// the mesh size.
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    let mut report = paired_levels_study(cfg)?;
    if report.levels.len() >= 2 {
        let hs: Vec<f64> = report.levels.iter().map(|l| l.h).collect();
        let eu: Vec<f64> = report.levels.iter().map(|l| l.err_u).collect();
        let ec: Vec<f64> = report.levels.iter().map(|l| l.err_c).collect();
        let es: Vec<f64> = report.levels.iter().map(|l| l.err_sigma).collect();
        report.rate_u = estimate_rate(&hs, &eu).ok();
        report.rate_c = estimate_rate(&hs, &ec).ok();
        report.rate_sigma = estimate_rate(&hs, &es).ok();
    }
    Ok(report)
}

/// Error-inflation scan: fixed mesh, decreasing time steps, no rate fit;
/// the diagnostic is the error trend as k shrinks.
pub fn inverse_k_study(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    paired_levels_study(cfg)
}

/// Least-squares slope of log(error) against log(h).
pub fn estimate_rate(hs: &[f64], errors: &[f64]) -> Result<f64> {
    if hs.len() != errors.len() || hs.len() < 2 {
        return Err(Error::invalid("rate fit needs at least two pairs"));
    }
    if hs.iter().any(|&h| h <= 0.0) || errors.iter().any(|&e| e <= 0.0) {
        return Err(Error::invalid("rate fit needs positive data"));
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    if den == 0.0 {
        return Err(Error::invalid("rate fit needs distinct mesh sizes"));
    }
    Ok(num / den)
}

#[derive(Debug, Clone)]
pub struct BlowupRow {
    pub t_m: f64,
    pub samples: usize,
    pub min_u: f64,
    pub max_u: f64,
    pub mass: f64,
    pub linf_mean_field: f64,
}

#[derive(Debug, Clone)]
pub struct BlowupReport {
    pub rows: Vec<BlowupRow>,
    /// Mean density field per horizon, vertex order.
    pub mean_fields: Vec<(f64, Vec<f64>)>,
    pub mesh_n: usize,
    pub wall_seconds: f64,
}

/// Blow-up study: per-sample runs to the largest horizon, snapshotting the
/// density at every requested horizon; the mean field and monotonicity of
/// its peak are the outputs.
pub fn blowup_study(cfg: &ExperimentConfig) -> Result<BlowupReport> {
    cfg.validate()?;
    let start = Instant::now();
    let level = *cfg
        .levels
        .first()
        .ok_or_else(|| Error::Config("blow-up study needs one level".into()))?;
    if cfg.blowup_times.is_empty() {
        return Err(Error::Config("blow-up study needs horizons".into()));
    }
    let mut horizons = cfg.blowup_times.clone();
    horizons.sort_by(|a, b| a.total_cmp(b));
    let t_max = *horizons.last().unwrap();
    let k = level.k;
    // horizons must sit on the step grid
    let mut horizon_steps = Vec::with_capacity(horizons.len());
    for &tm in &horizons {
        let s = (tm / k).round();
        if s < 1.0 || (s * k - tm).abs() > 1e-9 * tm {
            return Err(Error::Config(format!(
                "horizon {tm} is not a multiple of the step {k}"
            )));
        }
        horizon_steps.push(s as usize);
    }
    let params = cfg.model_params();
    let data = initial_data(cfg.initial_data, params.length);
    let mesh = PeriodicMesh::build_uniform(level.n, params.length)?;
    let forms = assemble_static(&mesh, params.b)?;
    let disc = Discretization::new(level.n, k, t_max)?;
    let state0 = initialize(&mesh, &forms, &data)?;
    warn_stability(&params, t_max, k, &mesh, &state0.u)?;
    let k0 = cfg.k0.min(k);

    struct SampleOut {
        snapshots: Vec<Vec<f64>>,
        min_u: Vec<f64>,
        max_u: Vec<f64>,
    }

    let results: Vec<Option<SampleOut>> = (0..cfg.samples)
        .into_par_iter()
        .map(|j| -> Result<Option<SampleOut>> {
            let seed = cfg.base_seed.wrapping_add(j as u64);
            let path = WienerPath::generate(seed, t_max, k0)?;
            let stepper = Stepper::new(&mesh, &forms, params, disc)?;
            let mut snapshots: Vec<Vec<f64>> = Vec::with_capacity(horizon_steps.len());
            let mut min_series = Vec::with_capacity(horizon_steps.len());
            let mut max_series = Vec::with_capacity(horizon_steps.len());
            let mut running_min = f64::INFINITY;
            let mut running_max = f64::NEG_INFINITY;
            let mut next = 0usize;
            let mut observer =
                |m: usize, _t: f64, s: &SchemeState, d: &crate::scheme::StepDiagnostics| {
                    running_min = running_min.min(d.min_u);
                    running_max = running_max.max(d.max_u);
                    if next < horizon_steps.len() && m == horizon_steps[next] {
                        snapshots.push(s.u.clone());
                        min_series.push(running_min);
                        max_series.push(running_max);
                        next += 1;
                    }
                };
            match run(&stepper, state0.clone(), &path, Some(&mut observer)) {
                Ok(_) => {}
                Err(e) => {
                    eprintln!("warning: blow-up sample {j} excluded: {e}");
                    return Ok(None);
                }
            }
            Ok(Some(SampleOut {
                snapshots,
                min_u: min_series,
                max_u: max_series,
            }))
        })
        .collect::<Result<_>>()?;

    let kept: Vec<&SampleOut> = results.iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::Config("all blow-up samples excluded".into()));
    }
    let nvert = mesh.num_vertices();
    let stepper = Stepper::new(&mesh, &forms, params, disc)?;
    let mut rows = Vec::with_capacity(horizons.len());
    let mut mean_fields = Vec::with_capacity(horizons.len());
    for (hi, &tm) in horizons.iter().enumerate() {
        let mut mean = vec![0.0f64; nvert];
        let mut min_u = f64::INFINITY;
        let mut max_u = f64::NEG_INFINITY;
        for s in &kept {
            for (acc, v) in mean.iter_mut().zip(&s.snapshots[hi]) {
                *acc += v;
            }
            min_u = min_u.min(s.min_u[hi]);
            max_u = max_u.max(s.max_u[hi]);
        }
        let jn = kept.len() as f64;
        for v in &mut mean {
            *v /= jn;
        }
        let linf = mean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rows.push(BlowupRow {
            t_m: tm,
            samples: kept.len(),
            min_u,
            max_u,
            mass: stepper.mass_of(&mean),
            linf_mean_field: linf,
        });
        mean_fields.push((tm, mean));
    }
    Ok(BlowupReport {
        rows,
        mean_fields,
        mesh_n: level.n,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs a single realization of the first configured level, returning the
/// per-step diagnostics series.
pub fn single_run(cfg: &ExperimentConfig) -> Result<Vec<crate::scheme::StepDiagnostics>> {
    cfg.validate()?;
    let level = *cfg
        .levels
        .first()
        .ok_or_else(|| Error::Config("run needs one level".into()))?;
    let params = cfg.model_params();
    let data = initial_data(cfg.initial_data, params.length);
    let mesh = PeriodicMesh::build_uniform(level.n, params.length)?;
    let forms = assemble_static(&mesh, params.b)?;
    let disc = Discretization::new(level.n, level.k, cfg.t_final)?;
    let state0 = initialize(&mesh, &forms, &data)?;
    warn_stability(&params, cfg.t_final, level.k, &mesh, &state0.u)?;
    let k0 = cfg.k0.min(level.k);
    let path = WienerPath::generate(cfg.base_seed, cfg.t_final, k0)?;
    let stepper = Stepper::new(&mesh, &forms, params, disc)?;
    let (_, series) = run(&stepper, state0, &path, None)?;
    Ok(series)
}

/// CSV schemas. Headers are part of the external contract.
pub fn write_convergence_csv(report: &ErrorReport, w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "level,h,k,J,err_u,err_c,err_sigma,rate_u,rate_c,rate_sigma,excluded"
    )?;
    for (i, l) in report.levels.iter().enumerate() {
        // per-row rates against the previous level; global fits live in the report
        let (ru, rc, rs) = if i == 0 {
            (String::new(), String::new(), String::new())
        } else {
            let p = &report.levels[i - 1];
            let pair = |e0: f64, e1: f64| {
                if e0 > 0.0 && e1 > 0.0 && p.h != l.h {
                    format!("{}", (e0 / e1).ln() / (p.h / l.h).ln())
                } else {
                    String::new()
                }
            };
            (
                pair(p.err_u, l.err_u),
                pair(p.err_c, l.err_c),
                pair(p.err_sigma, l.err_sigma),
            )
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            i,
            l.h,
            l.k,
            report.samples - l.excluded,
            l.err_u,
            l.err_c,
            l.err_sigma,
            ru,
            rc,
            rs,
            l.excluded
        )?;
    }
    Ok(())
}

pub fn write_inverse_k_csv(report: &ErrorReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "h,k,J,err_u,err_c,err_sigma,excluded")?;
    for l in &report.levels {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            l.h,
            l.k,
            report.samples - l.excluded,
            l.err_u,
            l.err_c,
            l.err_sigma,
            l.excluded
        )?;
    }
    Ok(())
}

pub fn write_blowup_csv(report: &BlowupReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "tM,J,min_u,max_u,mass,linf_mean_field")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.t_m, r.samples, r.min_u, r.max_u, r.mass, r.linf_mean_field
        )?;
    }
    Ok(())
}

pub fn write_field_csv(mesh: &PeriodicMesh, field: &[f64], w: &mut impl Write) -> Result<()> {
    writeln!(w, "vertex_x,vertex_y,mean_u")?;
    for (v, p) in mesh.vertices().iter().enumerate() {
        writeln!(w, "{},{},{}", p[0], p[1], field[v])?;
    }
    Ok(())
}
