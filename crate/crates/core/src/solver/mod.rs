//! Solver plumbing shared by the four first-order methods.
//!
//! Every solver works on the real embedding `H = [Re G; Im G]`,
//! `ỹ = [Re y; Im y]` (see [`Dictionary::real`]) so the decision variable
//! stays real throughout.

pub mod aspg;
pub mod cadmm;
pub mod egt;
pub mod sdco;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{ConstraintMatrix, Dictionary};
use crate::prox::{l21_norm, GroupedVector, ProxError};
use crate::signal::Measurement;

pub use aspg::{iteration_envelope, solve_aspg, solve_aspg_observed, AspgConfig};
pub use cadmm::{solve_cadmm, solve_cadmm_observed, CadmmConfig};
pub use egt::{smoothed_dual, smoothed_primal, solve_egt, solve_egt_observed, DualPoint, EgtConfig, EgtProblem};
pub use sdco::{
    inner_argmin_x, sdco_step, solve_sdco, solve_sdco_continuation, solve_sdco_observed, SdcoConfig, SdcoState,
    ShrinkRule,
};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite {what} at iteration {iter}")]
    NonFinite { iter: usize, what: &'static str },
    #[error("step size underflow at iteration {iter} (alpha = {alpha:e})")]
    StepUnderflow { iter: usize, alpha: f64 },
    #[error("Lipschitz estimate overflow at iteration {iter} (L = {lipschitz:e})")]
    LipschitzOverflow { iter: usize, lipschitz: f64 },
    #[error("excessive gap condition violated at iteration {iter}: F_mu2 = {primal}, Phi_mu1 = {dual}")]
    ExcessiveGap { iter: usize, primal: f64, dual: f64 },
    #[error(transparent)]
    Prox(#[from] ProxError),
}

/// One recorded iteration. Columns a solver does not produce stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub residual_primal: Option<f64>,
    pub residual_dual: Option<f64>,
    pub gap: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub step: Option<f64>,
}

impl TraceRow {
    pub fn new(iter: usize, objective: f64) -> Self {
        Self {
            iter,
            objective,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub x_hat: GroupedVector,
    /// One row per iteration; `trace.len() == iterations`.
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolverResult {
    pub fn objective_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.objective).collect()
    }

    pub fn residual_trace(&self) -> Vec<(Option<f64>, Option<f64>)> {
        self.trace.iter().map(|r| (r.residual_primal, r.residual_dual)).collect()
    }

    pub fn gap_trace(&self) -> Vec<Option<f64>> {
        self.trace.iter().map(|r| r.gap).collect()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.trace.last().map(|r| r.objective)
    }
}

/// Solver identifiers as used in configuration files and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Cadmm,
    AspgL1,
    AspgL2,
    Egt,
    Sdco,
    SdcoCt,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::Cadmm,
        SolverKind::AspgL1,
        SolverKind::AspgL2,
        SolverKind::Egt,
        SolverKind::Sdco,
        SolverKind::SdcoCt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Cadmm => "cadmm",
            SolverKind::AspgL1 => "aspg-l1",
            SolverKind::AspgL2 => "aspg-l2",
            SolverKind::Egt => "egt",
            SolverKind::Sdco => "sdco",
            SolverKind::SdcoCt => "sdco-ct",
        }
    }

    /// Whether the solver takes the regularization weight `η` (SDCO uses `ε`).
    pub fn uses_eta(self) -> bool {
        !matches!(self, SolverKind::Sdco | SolverKind::SdcoCt)
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown solver `{s}`"))
    }
}

/// Called once per iteration with the iteration index and the solver's
/// current feasible estimate of `x`.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &DVector<f64>);

/// Default regularization weight `η = c·σ̂_n·√(ln N)/√T`.
///
/// `T` falls back to 1 for measurements without a snapshot count.
pub fn default_eta(measurement: &Measurement, groups: usize, scale: f64) -> f64 {
    let t = measurement.snapshot_count.unwrap_or(1).max(1) as f64;
    scale * measurement.noise_floor.sqrt() * (groups as f64).ln().sqrt() / t.sqrt()
}

/// `½‖ỹ − Hx‖² + η‖x‖₂,₁`.
pub fn lasso_objective(h: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>, eta: f64) -> f64 {
    0.5 * (y - h * x).norm_squared() + eta * l21_norm(x)
}

/// Real-embedded problem data borrowed from a dictionary and measurement.
pub(crate) struct Problem<'a> {
    pub h: &'a DMatrix<f64>,
    pub y: DVector<f64>,
    pub c: ConstraintMatrix,
}

impl<'a> Problem<'a> {
    pub fn new(measurement: &Measurement, dictionary: &'a Dictionary) -> Result<Self, SolverError> {
        if measurement.y.len() != dictionary.rows() {
            return Err(SolverError::Dimension(format!(
                "measurement has {} rows, dictionary {}",
                measurement.y.len(),
                dictionary.rows()
            )));
        }
        Ok(Self {
            h: dictionary.real(),
            y: measurement.y_real(),
            c: ConstraintMatrix::new(dictionary.groups(), dictionary.grid().r()),
        })
    }

    pub fn groups(&self) -> usize {
        self.h.ncols() / 2
    }

    pub fn r(&self) -> f64 {
        self.c.r()
    }
}

pub(crate) fn check_finite(v: &DVector<f64>, iter: usize, what: &'static str) -> Result<(), SolverError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SolverError::NonFinite { iter, what })
    }
}

pub(crate) fn check_positive(value: f64, name: &str) -> Result<(), SolverError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig(format!("{name} must be positive, got {value}")))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("fista".parse::<SolverKind>().is_err());
    }

    #[test]
    fn default_eta_formula() {
        let dict = testutil::small_dictionary();
        let meas = testutil::zero_measurement(&dict);
        let eta = default_eta(&meas, 360, 1.0);
        assert!((eta - (360f64).ln().sqrt() / 10.0).abs() < 1e-15);
    }
}
