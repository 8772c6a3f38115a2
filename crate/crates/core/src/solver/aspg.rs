//! Accelerated smoothing proximal gradient.
//!
//! Minimizes `H(x) = ½‖ỹ − Hx‖² + h_μ(x)` over `X`, where `h_μ` is the
//! smoothed group penalty from [`crate::prox::SmoothedPenalty`]. Each
//! iteration extrapolates `w = x_k + k/(k+3)·(x_k − x_{k−1})`, takes a
//! projected gradient step from `w` and backtracks `α ← γα` until the
//! quadratic upper bound holds. The step carries over between iterations.
//!
//! The L1 variant steps along the zero-padded penalty gradient, which is not
//! the gradient of `h_μ` off the `s` axis. The upper-bound test therefore
//! uses the true gradient of the smoothed objective; the descent lemma then
//! guarantees acceptance once `α ≤ 1/L` whatever the step direction.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{check_finite, check_positive, lasso_objective, Observer, Problem, SolverError, SolverResult, TraceRow};
use crate::array::Dictionary;
use crate::prox::{project_feasible_in_place, GroupedVector, PenaltyVariant, SmoothedPenalty};
use crate::signal::Measurement;

const ALPHA_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AspgConfig {
    pub variant: PenaltyVariant,
    pub eta: f64,
    pub mu: f64,
    pub gamma: f64,
    pub alpha0: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for AspgConfig {
    fn default() -> Self {
        Self {
            variant: PenaltyVariant::L1,
            eta: 1.0,
            mu: 1e-8,
            gamma: 0.5,
            alpha0: 1.0,
            max_iters: 5000,
            tol: 1e-9,
        }
    }
}

impl AspgConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        check_positive(self.eta, "eta")?;
        check_positive(self.mu, "mu")?;
        check_positive(self.alpha0, "alpha0")?;
        check_positive(self.tol, "tol")?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SolverError::InvalidConfig(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Right-hand side of the iteration bound for smoothed accelerated
/// gradient with `μ = ε/(2D)`:
/// `ε/2 + 2(L_f + 2D/(εσ))·dist0²/(k+1)²`, `σ = 1`.
pub fn iteration_envelope(k: usize, eps: f64, d: f64, l_f: f64, dist0: f64) -> f64 {
    let k1 = (k + 1) as f64;
    eps / 2.0 + 2.0 * (l_f + 2.0 * d / eps) * dist0 * dist0 / (k1 * k1)
}

struct Smooth<'a> {
    prob: &'a Problem<'a>,
    pen: SmoothedPenalty,
    scratch: DVector<f64>,
}

impl Smooth<'_> {
    /// Smoothed objective at `x`, the step direction and the true gradient.
    fn eval(&mut self, x: &DVector<f64>, step_dir: &mut DVector<f64>, exact: &mut DVector<f64>) -> f64 {
        let resid = self.prob.h * x - &self.prob.y;
        let grad_f = self.prob.h.transpose() * &resid;
        self.pen.eval_into(x, &mut self.scratch);
        step_dir.copy_from(&grad_f);
        *step_dir += &self.scratch;
        let h_val = self.pen.eval_exact_into(x, &mut self.scratch);
        exact.copy_from(&grad_f);
        *exact += &self.scratch;
        0.5 * resid.norm_squared() + h_val
    }

    fn value(&mut self, x: &DVector<f64>) -> f64 {
        let resid = self.prob.h * x - &self.prob.y;
        0.5 * resid.norm_squared() + self.pen.eval_into(x, &mut self.scratch)
    }
}

pub fn solve_aspg(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &AspgConfig,
) -> Result<SolverResult, SolverError> {
    solve_aspg_observed(measurement, dictionary, config, &mut |_, _| {})
}

pub fn solve_aspg_observed(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &AspgConfig,
    observer: Observer<'_>,
) -> Result<SolverResult, SolverError> {
    config.validate()?;
    let prob = Problem::new(measurement, dictionary)?;
    let n2 = 2 * prob.groups();
    let pen = SmoothedPenalty::new(config.eta, config.mu, config.variant)?;
    let mut smooth = Smooth { prob: &prob, pen, scratch: DVector::zeros(n2) };

    let mut x_prev = DVector::<f64>::zeros(n2);
    let mut x = DVector::<f64>::zeros(n2);
    let mut grad = DVector::zeros(n2);
    let mut exact = DVector::zeros(n2);
    let mut alpha = config.alpha0;
    let mut trace = Vec::new();
    let mut converged = false;

    for k in 1..=config.max_iters {
        let beta = k as f64 / (k as f64 + 3.0);
        let w = &x + (&x - &x_prev) * beta;
        let f_w = smooth.eval(&w, &mut grad, &mut exact);
        if !f_w.is_finite() {
            return Err(SolverError::NonFinite { iter: k, what: "objective" });
        }
        let z = loop {
            let mut z = &w - &grad * alpha;
            project_feasible_in_place(&mut z, prob.r());
            let d = &z - &w;
            let bound = f_w + exact.dot(&d) + d.norm_squared() / (2.0 * alpha);
            let f_z = smooth.value(&z);
            if f_z <= bound {
                break z;
            }
            alpha *= config.gamma;
            if alpha < ALPHA_FLOOR {
                return Err(SolverError::StepUnderflow { iter: k, alpha });
            }
        };
        check_finite(&z, k, "iterate")?;

        let change = (&z - &x).norm() / x.norm().max(1.0);
        x_prev = std::mem::replace(&mut x, z);
        trace.push(TraceRow {
            step: Some(alpha),
            ..TraceRow::new(k, lasso_objective(prob.h, &prob.y, &x, config.eta))
        });
        observer(k, &x);
        if change <= config.tol {
            converged = true;
            break;
        }
    }

    let iterations = trace.len();
    Ok(SolverResult {
        x_hat: GroupedVector::new(x)?,
        trace,
        iterations,
        converged,
    })
}
