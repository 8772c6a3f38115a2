//! Monte-Carlo sweep over (SNR, trial) cells.

use offgrid_core::solver::{
    solve_aspg_observed, solve_cadmm_observed, solve_egt_observed, solve_sdco_observed, Observer,
};
use offgrid_core::{
    default_eta, music_spectrum, recover_doas, rmse_angles, Dictionary, DoAEstimate, Measurement,
    PenaltyVariant, Scenario, SolverError, SolverKind, SolverResult,
};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ExperimentConfig, Method};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("simulation failed: {0}")]
    Signal(#[from] offgrid_core::signal::SignalError),
    #[error("{method} failed at SNR {snr_db} dB, trial {trial}: {message}")]
    Method { method: Method, snr_db: f64, trial: usize, message: String },
}

/// Seed of trial `trial` at the `snr_index`-th SNR (splitmix64 finalizer).
pub fn trial_seed(base: u64, snr_index: usize, trial: usize) -> u64 {
    let mut z = base
        .wrapping_add((snr_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((trial as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn scenario(cfg: &ExperimentConfig, snr_db: f64, seed: u64) -> Scenario {
    Scenario::with_snr(&cfg.scenario.thetas, snr_db, cfg.scenario.snapshots, seed)
}

pub fn resolve_eta(cfg: &ExperimentConfig, meas: &Measurement, groups: usize) -> f64 {
    cfg.experiment.eta.unwrap_or_else(|| default_eta(meas, groups, cfg.experiment.eta_scale))
}

/// Runs one solver with the configured parameters and `η`.
pub fn run_solver(
    kind: SolverKind,
    cfg: &ExperimentConfig,
    meas: &Measurement,
    dict: &Dictionary,
    eta: f64,
    observer: Observer<'_>,
) -> Result<SolverResult, SolverError> {
    match kind {
        SolverKind::Cadmm => solve_cadmm_observed(meas, dict, &offgrid_core::CadmmConfig { eta, ..cfg.cadmm }, observer),
        SolverKind::AspgL1 | SolverKind::AspgL2 => {
            let variant = if kind == SolverKind::AspgL1 { PenaltyVariant::L1 } else { PenaltyVariant::L2 };
            solve_aspg_observed(meas, dict, &offgrid_core::AspgConfig { eta, variant, ..cfg.aspg }, observer)
        }
        SolverKind::Egt => solve_egt_observed(meas, dict, &offgrid_core::EgtConfig { eta, ..cfg.egt }, observer),
        SolverKind::Sdco => solve_sdco_observed(meas, dict, &offgrid_core::SdcoConfig { rounds: 1, ..cfg.sdco }, observer),
        SolverKind::SdcoCt => solve_sdco_observed(meas, dict, &cfg.sdco, observer),
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub estimate: DoAEstimate,
    /// `None` for MUSIC.
    pub result: Option<SolverResult>,
    /// MUSIC pseudospectrum or solver group norms over the grid.
    pub spectrum: Vec<f64>,
}

/// Runs `method` on `meas` and extracts `K` DoAs.
pub fn run_method(
    method: Method,
    cfg: &ExperimentConfig,
    meas: &Measurement,
    dict: &Dictionary,
    eta: f64,
) -> Result<MethodRun, String> {
    let k = cfg.scenario.thetas.len();
    match method {
        Method::Music => {
            let (spectrum, estimate) =
                music_spectrum(&meas.sample_cov, dict.geometry(), dict.grid(), k).map_err(|e| e.to_string())?;
            Ok(MethodRun { method, estimate, result: None, spectrum })
        }
        Method::Solver(kind) => {
            let result = run_solver(kind, cfg, meas, dict, eta, &mut |_, _| {}).map_err(|e| e.to_string())?;
            let estimate = recover_doas(&result.x_hat, dict.grid(), k).map_err(|e| e.to_string())?;
            let spectrum = result.x_hat.group_norms().iter().copied().collect();
            Ok(MethodRun { method, estimate, result: Some(result), spectrum })
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub snr_index: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub eta: f64,
    pub runs: Vec<(Method, Result<MethodRun, String>)>,
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    dict: &Dictionary,
    snr_index: usize,
    trial: usize,
) -> Result<Cell, RunError> {
    let snr_db = cfg.experiment.snr_db[snr_index];
    let seed = trial_seed(cfg.experiment.base_seed, snr_index, trial);
    let meas = Measurement::simulate(&scenario(cfg, snr_db, seed), dict.geometry())?;
    let eta = resolve_eta(cfg, &meas, dict.groups());
    let runs = cfg
        .experiment
        .solvers
        .iter()
        .map(|&m| (m, run_method(m, cfg, &meas, dict, eta)))
        .collect();
    Ok(Cell { snr_index, snr_db, trial, seed, eta, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    /// `None` when every trial aborted.
    pub rmse: Option<f64>,
    pub completed: usize,
    pub aborted: usize,
    pub converged: usize,
    pub mean_iterations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrSummary {
    pub snr_db: f64,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub trials: usize,
    /// Ordered by SNR index, then trial.
    pub cells: Vec<Cell>,
    pub summary: Vec<SnrSummary>,
}

/// Runs every (SNR, trial) cell in parallel. Cells come back in a fixed
/// order, so the summary does not depend on scheduling. With `strict`, the
/// first failed method aborts the sweep.
pub fn run_experiment(cfg: &ExperimentConfig, full: bool, strict: bool) -> Result<Experiment, RunError> {
    cfg.validate()?;
    let dict = cfg.dictionary()?;
    let trials = cfg.trials(full);
    let jobs: Vec<(usize, usize)> =
        (0..cfg.experiment.snr_db.len()).flat_map(|s| (0..trials).map(move |t| (s, t))).collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(s, t)| run_cell(cfg, &dict, s, t))
        .collect::<Result<_, _>>()?;
    if strict {
        for cell in &cells {
            for (m, r) in &cell.runs {
                if let Err(message) = r {
                    return Err(RunError::Method { method: *m, snr_db: cell.snr_db, trial: cell.trial, message: message.clone() });
                }
            }
        }
    }
    let summary = summarize(cfg, &cells);
    Ok(Experiment { trials, cells, summary })
}

pub fn summarize(cfg: &ExperimentConfig, cells: &[Cell]) -> Vec<SnrSummary> {
    let truth = &cfg.scenario.thetas;
    cfg.experiment
        .snr_db
        .iter()
        .enumerate()
        .map(|(si, &snr_db)| {
            let here: Vec<&Cell> = cells.iter().filter(|c| c.snr_index == si).collect();
            let methods = cfg
                .experiment
                .solvers
                .iter()
                .enumerate()
                .map(|(mi, &method)| {
                    let ok: Vec<&MethodRun> = here.iter().filter_map(|c| c.runs[mi].1.as_ref().ok()).collect();
                    let thetas: Vec<&[f64]> = ok.iter().map(|r| r.estimate.thetas.as_slice()).collect();
                    let iters: Vec<usize> = ok.iter().filter_map(|r| r.result.as_ref().map(|x| x.iterations)).collect();
                    MethodSummary {
                        method,
                        rmse: rmse_angles(&thetas, truth).ok(),
                        completed: ok.len(),
                        aborted: here.len() - ok.len(),
                        converged: ok.iter().filter(|r| r.result.as_ref().is_some_and(|x| x.converged)).count(),
                        mean_iterations: (!iters.is_empty())
                            .then(|| iters.iter().sum::<usize>() as f64 / iters.len() as f64),
                    }
                })
                .collect();
            SnrSummary { snr_db, methods }
        })
        .collect()
}
