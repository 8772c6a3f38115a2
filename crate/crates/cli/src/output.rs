//! CSV / JSON writers. Floats are written in shortest round-trip form so
//! identical runs give byte-identical files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use offgrid_core::TraceRow;
use serde::Serialize;

use crate::config::{ExperimentConfig, Method, TraceOutput};
use crate::runner::{Experiment, SnrSummary};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_HEADER: [&str; 8] = ["iter", "objective", "residual_primal", "residual_dual", "gap", "mu1", "mu2", "step"];

/// Writes a trace; the header is written even when `rows` is empty.
pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> csv::Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().collect()
}

fn snr_tag(snr_db: f64) -> String {
    format!("{snr_db}").replace('-', "m").replace('.', "p")
}

pub fn trace_file_name(method: Method, snr_db: f64, trial: usize) -> String {
    format!("{method}_snr{}_trial{trial}.csv", snr_tag(snr_db))
}

/// `snr_db,<method>...`, one row per SNR; empty cell when every trial aborted.
pub fn write_rmse<W: Write>(out: W, methods: &[Method], summary: &[SnrSummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["snr_db".to_string()];
    header.extend(methods.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for s in summary {
        let mut row = vec![s.snr_db.to_string()];
        row.extend(s.methods.iter().map(|m| m.rmse.map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `theta_deg,<method>...` for one cell: MUSIC pseudospectrum, solver group
/// norms. Aborted methods get empty columns.
pub fn write_spectrum<W: Write>(out: W, grid: &[f64], columns: &[(Method, Option<&[f64]>)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["theta_deg".to_string()];
    header.extend(columns.iter().map(|(m, _)| m.to_string()));
    w.write_record(&header)?;
    for (i, phi) in grid.iter().enumerate() {
        let mut row = vec![phi.to_string()];
        row.extend(columns.iter().map(|(_, c)| c.map(|v| v[i].to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EtaRecord {
    snr_db: f64,
    trial: usize,
    seed: u64,
    eta: f64,
}

#[derive(Debug, Serialize)]
struct AbortRecord {
    snr_db: f64,
    trial: usize,
    method: Method,
    error: String,
}

#[derive(Debug, Serialize)]
struct EtaSection {
    scale: f64,
    fixed: Option<f64>,
    runs: Vec<EtaRecord>,
}

#[derive(Debug, Serialize)]
struct Results<'a> {
    schema_version: u32,
    trials: usize,
    config: &'a ExperimentConfig,
    eta: EtaSection,
    summary: &'a [SnrSummary],
    aborts: Vec<AbortRecord>,
}

pub fn results_json(cfg: &ExperimentConfig, exp: &Experiment) -> serde_json::Result<String> {
    let eta = EtaSection {
        scale: cfg.experiment.eta_scale,
        fixed: cfg.experiment.eta,
        runs: exp
            .cells
            .iter()
            .map(|c| EtaRecord { snr_db: c.snr_db, trial: c.trial, seed: c.seed, eta: c.eta })
            .collect(),
    };
    let aborts = exp
        .cells
        .iter()
        .flat_map(|c| {
            c.runs.iter().filter_map(move |(m, r)| {
                r.as_ref().err().map(|e| AbortRecord { snr_db: c.snr_db, trial: c.trial, method: *m, error: e.clone() })
            })
        })
        .collect();
    serde_json::to_string_pretty(&Results {
        schema_version: SCHEMA_VERSION,
        trials: exp.trials,
        config: cfg,
        eta,
        summary: &exp.summary,
        aborts,
    })
}

/// Writes `results.json`, `rmse.csv`, `traces/` and `spectra/` under `dir`.
pub fn write_experiment(dir: &Path, cfg: &ExperimentConfig, exp: &Experiment) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.json"), results_json(cfg, exp)? + "\n")?;
    write_rmse(fs::File::create(dir.join("rmse.csv"))?, &cfg.experiment.solvers, &exp.summary)?;

    if cfg.experiment.traces != TraceOutput::None {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir)?;
        for cell in &exp.cells {
            if cfg.experiment.traces == TraceOutput::First && cell.trial != 0 {
                continue;
            }
            for (m, r) in &cell.runs {
                if let Ok(run) = r {
                    if let Some(res) = &run.result {
                        let path = tdir.join(trace_file_name(*m, cell.snr_db, cell.trial));
                        write_trace(fs::File::create(path)?, &res.trace)?;
                    }
                }
            }
        }
    }

    if cfg.experiment.spectra {
        let sdir = dir.join("spectra");
        fs::create_dir_all(&sdir)?;
        let grid = cfg.grid()?;
        for cell in exp.cells.iter().filter(|c| c.trial == 0) {
            let columns: Vec<(Method, Option<&[f64]>)> =
                cell.runs.iter().map(|(m, r)| (*m, r.as_ref().ok().map(|x| x.spectrum.as_slice()))).collect();
            let path = sdir.join(format!("snr{}_trial0.csv", snr_tag(cell.snr_db)));
            write_spectrum(fs::File::create(path)?, grid.angles(), &columns)?;
        }
    }
    Ok(())
}
