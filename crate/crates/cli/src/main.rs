use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use offgrid_cli::config::{ExperimentConfig, Method};
use offgrid_cli::output::{write_experiment, write_trace};
use offgrid_cli::runner::{resolve_eta, run_method, scenario};
use offgrid_cli::{run_experiment, RunError};
use offgrid_core::signal::{sample_covariance, simulate_snapshots, write_snapshots};
use offgrid_core::{assemble_measurement, Measurement, SolverKind};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "offgrid", version, about = "Off-grid DoA group-sparsity solvers")]
struct Cli {
    /// TOML experiment configuration; desk defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (defaults to the config's `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// SNR in dB; for `bench`, replaces the configured SNR list.
    #[arg(long, global = true, allow_hyphen_values = true)]
    snr: Option<f64>,
    /// Solver name (`cadmm`, `aspg-l1`, `aspg-l2`, `egt`, `sdco`, `sdco-ct`, `music`);
    /// for `bench`, restricts the sweep to this method.
    #[arg(long, global = true)]
    solver: Option<Method>,
    /// Use the full trial count.
    #[arg(long, global = true)]
    full: bool,
    /// Fail on the first solver error instead of recording it.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate snapshots and write them with the sample covariance.
    Simulate,
    /// Run one solver on one simulated instance.
    Solve,
    /// Monte-Carlo sweep over SNR and trials.
    Bench,
    /// MUSIC pseudospectrum of one simulated instance.
    Spectrum,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, offgrid_cli::ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(snr) = cli.snr {
        cfg.experiment.snr_db = vec![snr];
    }
    if let Some(m) = cli.solver {
        cfg.experiment.solvers = vec![m];
    }
    if let Some(seed) = cli.seed {
        cfg.experiment.base_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.experiment.output_dir.clone());
    let res = match cli.command {
        Command::Simulate => simulate(&cfg, &out),
        Command::Solve => solve(&cfg, &out, cli.solver, cli.strict),
        Command::Bench => bench(&cfg, &out, cli.full, cli.strict),
        Command::Spectrum => spectrum(&cfg, &out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Single-instance commands use the first configured SNR and the base seed
/// as the simulation seed.
fn instance(cfg: &ExperimentConfig) -> (f64, u64) {
    (cfg.experiment.snr_db[0], cfg.experiment.base_seed)
}

#[derive(Serialize)]
struct InstanceInfo<'a> {
    snr_db: f64,
    seed: u64,
    thetas: &'a [f64],
    snapshots: usize,
    noise_floor: f64,
    total_power: f64,
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let (snr_db, seed) = instance(cfg);
    let geo = cfg.geometry()?;
    let sc = scenario(cfg, snr_db, seed);
    let v = simulate_snapshots(&sc, &geo)?;
    let r = sample_covariance(&v)?;
    let meas = assemble_measurement(&r)?;
    fs::create_dir_all(out)?;
    write_snapshots(fs::File::create(out.join("snapshots.bin"))?, &v)?;
    let mut w = csv::Writer::from_path(out.join("covariance.csv"))?;
    w.write_record(["row", "col", "re", "im"])?;
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            let z = r[(i, j)];
            w.write_record([i.to_string(), j.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
    }
    w.flush()?;
    let info = InstanceInfo {
        snr_db,
        seed,
        thetas: &sc.true_thetas,
        snapshots: sc.snapshots,
        noise_floor: meas.noise_floor,
        total_power: meas.total_power(),
    };
    fs::write(out.join("instance.json"), serde_json::to_string_pretty(&info)? + "\n")?;
    println!("wrote {} snapshots of {} sensors to {}", sc.snapshots, geo.sensors(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    method: Method,
    snr_db: f64,
    seed: u64,
    eta: f64,
    thetas: Vec<f64>,
    powers: Vec<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
}

fn solve(cfg: &ExperimentConfig, out: &Path, solver: Option<Method>, strict: bool) -> anyhow::Result<()> {
    let method = solver.unwrap_or(Method::Solver(SolverKind::Cadmm));
    let (snr_db, seed) = instance(cfg);
    let dict = cfg.dictionary()?;
    let meas = Measurement::simulate(&scenario(cfg, snr_db, seed), dict.geometry())?;
    let eta = resolve_eta(cfg, &meas, dict.groups());
    let run = match run_method(method, cfg, &meas, &dict, eta) {
        Ok(run) => run,
        Err(message) if strict => {
            return Err(RunError::Method { method, snr_db, trial: 0, message }.into());
        }
        Err(message) => {
            eprintln!("{method} aborted: {message}");
            return Ok(());
        }
    };
    fs::create_dir_all(out)?;
    if let Some(res) = &run.result {
        write_trace(fs::File::create(out.join(format!("trace_{method}.csv")))?, &res.trace)?;
    }
    let report = SolveReport {
        method,
        snr_db,
        seed,
        eta,
        thetas: run.estimate.thetas.clone(),
        powers: run.estimate.powers.clone(),
        iterations: run.result.as_ref().map(|r| r.iterations),
        converged: run.result.as_ref().map(|r| r.converged),
    };
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(out.join(format!("estimate_{method}.json")), json.clone() + "\n")?;
    println!("{json}");
    Ok(())
}

fn bench(cfg: &ExperimentConfig, out: &Path, full: bool, strict: bool) -> anyhow::Result<()> {
    let start = std::time::Instant::now();
    let exp = run_experiment(cfg, full, strict)?;
    write_experiment(out, cfg, &exp).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("{} cells in {:.1?}", exp.cells.len(), start.elapsed());
    for s in &exp.summary {
        let cols: Vec<String> = s
            .methods
            .iter()
            .map(|m| match m.rmse {
                Some(r) => format!("{}={r:.4}", m.method),
                None => format!("{}=n/a", m.method),
            })
            .collect();
        println!("snr {:>6} dB  {}", s.snr_db, cols.join("  "));
    }
    Ok(())
}

fn spectrum(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let (snr_db, seed) = instance(cfg);
    let dict = cfg.dictionary()?;
    let meas = Measurement::simulate(&scenario(cfg, snr_db, seed), dict.geometry())?;
    let run = run_method(Method::Music, cfg, &meas, &dict, 0.0).map_err(anyhow::Error::msg)?;
    fs::create_dir_all(out)?;
    offgrid_cli::output::write_spectrum(
        fs::File::create(out.join("spectrum.csv"))?,
        dict.grid().angles(),
        &[(Method::Music, Some(run.spectrum.as_slice()))],
    )?;
    println!("music peaks: {:?}", run.estimate.thetas);
    Ok(())
}
