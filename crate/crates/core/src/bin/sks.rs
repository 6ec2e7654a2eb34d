//! Command-line entry point: binds JSON experiment configs to the study
//! drivers with deterministic seeding and machine-readable CSV output.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use sks::config::ExperimentConfig;
use sks::experiments::{
    blowup_study, convergence_study, inverse_k_study, single_run, write_blowup_csv,
    write_convergence_csv, write_field_csv, write_inverse_k_csv,
};
use sks::mesh::PeriodicMesh;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "sks", version, about = "stochastic Keller-Segel simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Override the base seed (falls back to SKS_SEED, then the file value).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSVs and the effective-config echo.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Sample-level parallelism cap (default: available cores). Results do
    /// not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the Wiener path resolution.
    #[arg(long, global = true)]
    k0: Option<f64>,
    /// Cache reference trajectories in this directory for repeated studies.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    quiet: u8,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Single realization of the first level; streams per-step diagnostics.
    Run,
    /// Paired coarse/reference convergence study with rate fits.
    Convergence,
    /// Fixed-mesh error scan over decreasing time steps.
    InverseK,
    /// Blow-up study: mean-field snapshots over the configured horizons.
    Blowup,
    /// Built-in verification suites (assembly oracle, mass conservation,
    /// heat reduction).
    Selftest,
}

fn main() -> ExitCode {
    // usage problems exit 1 (clap's default would be 2, which is reserved
    // for numerical failures)
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(t) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .is_err()
        {
            eprintln!("error: thread pool already initialized");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                sks::Error::Config(_) | sks::Error::InvalidArgument(_) | sks::Error::Io(_) => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: &Cli) -> sks::Result<ExitCode> {
    if matches!(cli.cmd, Cmd::Selftest) {
        return selftest(cli.quiet == 0);
    }
    let cfg = load_config(cli)?;
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("effective_config.json"), cfg.to_json())?;
    match cli.cmd {
        Cmd::Run => {
            let series = single_run(&cfg)?;
            let path = cli.out.join("diagnostics.csv");
            let mut w = fs::File::create(&path)?;
            writeln!(w, "m,t,mass,min_u,max_u,l2_u,sigma_iters,u_iters,c_iters")?;
            let k = cfg.levels[0].k;
            for (i, d) in series.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    i + 1,
                    (i + 1) as f64 * k,
                    d.mass,
                    d.min_u,
                    d.max_u,
                    d.l2_u,
                    d.sigma_solve.iterations,
                    d.u_solve.iterations,
                    d.c_solve.iterations
                )?;
            }
            if cli.quiet == 0 {
                println!("wrote {}", path.display());
            }
        }
        Cmd::Convergence => {
            let report = convergence_study(&cfg)?;
            if report.levels.iter().any(|l| l.excluded >= cfg.samples) {
                return Ok(ExitCode::from(2));
            }
            let path = cli.out.join("convergence.csv");
            let mut w = fs::File::create(&path)?;
            write_convergence_csv(&report, &mut w)?;
            if cli.verbose > 0 {
                print_levels(&report);
            }
            if cli.quiet == 0 {
                println!(
                    "wrote {} ({} levels, J = {}, {:.1}s)",
                    path.display(),
                    report.levels.len(),
                    report.samples,
                    report.wall_seconds
                );
                if let (Some(u), Some(c), Some(s)) =
                    (report.rate_u, report.rate_c, report.rate_sigma)
                {
                    println!("fitted rates: u {u:.3}  c {c:.3}  sigma {s:.3}");
                }
            }
        }
        Cmd::InverseK => {
            let report = inverse_k_study(&cfg)?;
            let path = cli.out.join("inverse_k.csv");
            let mut w = fs::File::create(&path)?;
            write_inverse_k_csv(&report, &mut w)?;
            if cli.verbose > 0 {
                print_levels(&report);
            }
            if cli.quiet == 0 {
                println!("wrote {}", path.display());
            }
        }
        Cmd::Blowup => {
            let report = blowup_study(&cfg)?;
            let path = cli.out.join("blowup.csv");
            let mut w = fs::File::create(&path)?;
            write_blowup_csv(&report, &mut w)?;
            let mesh = PeriodicMesh::build_uniform(report.mesh_n, cfg.params.length)?;
            for (i, (tm, field)) in report.mean_fields.iter().enumerate() {
                let fpath = cli.out.join(format!("field_{i}_tM_{tm}.csv"));
                let mut w = fs::File::create(&fpath)?;
                write_field_csv(&mesh, field, &mut w)?;
            }
            if cli.quiet == 0 {
                println!("wrote {} and {} field dumps", path.display(), report.mean_fields.len());
            }
        }
        Cmd::Selftest => unreachable!(),
    }
    Ok(ExitCode::SUCCESS)
}

fn print_levels(report: &sks::experiments::ErrorReport) {
    println!("  n      h          k            err_u        err_c        err_sigma    excluded");
    for l in &report.levels {
        println!(
            "  {:<4}  {:<9}  {:<11}  {:<11.5e}  {:<11.5e}  {:<11.5e}  {}",
            l.n, l.h, l.k, l.err_u, l.err_c, l.err_sigma, l.excluded
        );
    }
}

fn load_config(cli: &Cli) -> sks::Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| sks::Error::Config("--config PATH is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| {
        sks::Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(j) = cli.samples {
        cfg.samples = j;
    }
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    } else if let Ok(env_seed) = std::env::var("SKS_SEED") {
        cfg.base_seed = env_seed
            .parse()
            .map_err(|_| sks::Error::Config("SKS_SEED must be a u64".into()))?;
    }
    if let Some(k0) = cli.k0 {
        cfg.k0 = k0;
    }
    if let Some(cache) = &cli.cache {
        cfg.cache_dir = Some(cache.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn selftest(noisy: bool) -> sks::Result<ExitCode> {
    let results = sks::selftest::run_all()?;
    let mut all_ok = true;
    for r in &results {
        all_ok &= r.passed;
        if noisy || !r.passed {
            println!(
                "{} {}: {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.detail
            );
        }
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

