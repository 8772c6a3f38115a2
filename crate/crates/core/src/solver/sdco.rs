//! Smoothed dual conic solver for
//! `min ‖x‖₂,₁ s.t. ‖ỹ − Hx‖₂ ≤ ε, Cx ≤ 0`.
//!
//! The objective is smoothed with `μ/2‖x − x₀‖²`, which makes the Lagrange
//! dual differentiable in `(z, w)` with the closed-form inner minimizer
//! `x(z, w) = GST(x₀ − (Hᵀz + Cᵀw)/μ, 1/μ)`. The dual is solved by an
//! accelerated generalized gradient scheme with backtracking on `L`, and
//! [`solve_sdco_continuation`] repeats the solve with `μ` halved each round.
//!
//! Per iteration, with `c` the acceleration weight, `s` the averaged dual
//! point and `v` the auxiliary one:
//!
//! ```text
//! y  = (1 − c)s + c v
//! v⁺ = prox_{ε‖·‖/(cL)}(v − ∇g_sm(y)/(cL))     (w-block clamped at 0)
//! s⁺ = (1 − c)s + c v⁺
//! x̄⁺ = (1 − c)x̄ + c x(y)
//! ```
//!
//! `L` grows until the quadratic upper bound holds between `y` and `s⁺`.
//! The primal estimate is the running average `x̄`; the inner minimizer at a
//! single dual point reaches the residual bound far more slowly.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{check_finite, check_positive, Observer, Problem, SolverError, SolverResult, TraceRow};
use crate::array::Dictionary;
use crate::prox::{group_soft_threshold_in_place, l21_norm, l2_shrink, GroupedVector};
use crate::signal::Measurement;

const LIPSCHITZ_CEILING: f64 = 1e16;

/// Threshold used in the `z` shrinkage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkRule {
    /// `Shrink(·, 2ε/L)`.
    #[default]
    DoubleEpsilon,
    /// `Shrink(·, ε/L)`, the exact proximal map of `ε‖z‖₂`.
    ProxExact,
}

impl ShrinkRule {
    fn factor(self) -> f64 {
        match self {
            ShrinkRule::DoubleEpsilon => 2.0,
            ShrinkRule::ProxExact => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdcoConfig {
    /// Residual bound; `None` uses `trace(R̂)/√T`.
    pub epsilon: Option<f64>,
    /// Smoothing parameter (starting value under continuation).
    pub mu: f64,
    pub lipschitz0: f64,
    pub gamma: f64,
    /// Iteration cap per solve (per round under continuation).
    pub max_iters: usize,
    /// Relative change of the dual objective that ends a solve.
    pub tol: f64,
    pub shrink: ShrinkRule,
    /// Continuation rounds.
    pub rounds: usize,
    /// Per-round factor on `μ`.
    pub mu_decay: f64,
}

impl Default for SdcoConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            mu: 1.0,
            lipschitz0: 1.0,
            gamma: 0.5,
            max_iters: 2000,
            tol: 1e-9,
            shrink: ShrinkRule::DoubleEpsilon,
            rounds: 8,
            mu_decay: 0.5,
        }
    }
}

impl SdcoConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        check_positive(self.mu, "mu")?;
        check_positive(self.lipschitz0, "lipschitz0")?;
        check_positive(self.tol, "tol")?;
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(SolverError::InvalidConfig(format!("epsilon must be non-negative, got {e}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SolverError::InvalidConfig(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.mu_decay > 0.0 && self.mu_decay < 1.0) {
            return Err(SolverError::InvalidConfig(format!("mu_decay must lie in (0, 1), got {}", self.mu_decay)));
        }
        if self.rounds == 0 {
            return Err(SolverError::InvalidConfig("rounds must be at least 1".into()));
        }
        Ok(())
    }

    /// The residual bound used for `measurement`.
    pub fn epsilon_for(&self, measurement: &Measurement) -> f64 {
        self.epsilon.unwrap_or_else(|| default_epsilon(measurement))
    }
}

/// `trace(R̂)/√T`; `T` falls back to 1 when unknown.
pub fn default_epsilon(measurement: &Measurement) -> f64 {
    let t = measurement.snapshot_count.unwrap_or(1).max(1) as f64;
    measurement.total_power() / t.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdcoState {
    /// Dual variable of the norm cone, real-embedded (length `2M²`).
    pub z: DVector<f64>,
    /// Dual variable of `Cx ≤ 0` (length `3N`), non-negative.
    pub w: DVector<f64>,
    pub s_z: DVector<f64>,
    pub s_w: DVector<f64>,
    pub c: f64,
    pub lipschitz: f64,
    pub mu: f64,
    pub x0: DVector<f64>,
    /// Running average of the inner minimizers at the extrapolated points;
    /// this is the primal estimate.
    pub x_bar: DVector<f64>,
    pub epsilon: f64,
}

impl SdcoState {
    /// All-zero duals and prox-center.
    pub fn initial(dictionary: &Dictionary, mu: f64, lipschitz: f64, epsilon: f64) -> Self {
        let m = 2 * dictionary.rows();
        let n = dictionary.groups();
        Self {
            z: DVector::zeros(m),
            w: DVector::zeros(3 * n),
            s_z: DVector::zeros(m),
            s_w: DVector::zeros(3 * n),
            c: 1.0,
            lipschitz,
            mu,
            x0: DVector::zeros(2 * n),
            x_bar: DVector::zeros(2 * n),
            epsilon,
        }
    }
}

/// `GST(x₀ − (Hᵀz + Cᵀw)/μ, 1/μ)`.
pub fn inner_argmin_x(
    z: &DVector<f64>,
    w: &DVector<f64>,
    mu: f64,
    x0: &DVector<f64>,
    dictionary: &Dictionary,
) -> GroupedVector {
    let c = crate::array::ConstraintMatrix::new(dictionary.groups(), dictionary.grid().r());
    let x = inner_x(dictionary.real(), &c, z, w, mu, x0);
    GroupedVector::new(x).expect("2N is even")
}

fn inner_x(
    h: &nalgebra::DMatrix<f64>,
    c: &crate::array::ConstraintMatrix,
    z: &DVector<f64>,
    w: &DVector<f64>,
    mu: f64,
    x0: &DVector<f64>,
) -> DVector<f64> {
    let mut v = x0 - (h.transpose() * z + c.apply_transpose(w)) / mu;
    group_soft_threshold_in_place(&mut v, 1.0 / mu);
    v
}

/// Smooth part `g_sm`, its inner minimizer and gradient `(ỹ − Hx, −Cx)`.
struct Eval {
    value: f64,
    grad_z: DVector<f64>,
    grad_w: DVector<f64>,
}

fn evaluate(prob: &Problem<'_>, z: &DVector<f64>, w: &DVector<f64>, mu: f64, x0: &DVector<f64>) -> Eval {
    evaluate_with_x(prob, z, w, mu, x0).0
}

fn evaluate_with_x(
    prob: &Problem<'_>,
    z: &DVector<f64>,
    w: &DVector<f64>,
    mu: f64,
    x0: &DVector<f64>,
) -> (Eval, DVector<f64>) {
    let x = inner_x(prob.h, &prob.c, z, w, mu, x0);
    let grad_z = &prob.y - prob.h * &x;
    let cx = prob.c.apply(&x);
    let value = -l21_norm(&x) - 0.5 * mu * (&x - x0).norm_squared() + z.dot(&grad_z) - w.dot(&cx);
    (Eval { value, grad_z, grad_w: -cx }, x)
}

/// Smoothed dual value `ḡ_μ(z, w) = −g_sm(z, w) − ε‖z‖`.
pub fn smoothed_dual_value(state: &SdcoState, dictionary: &Dictionary, measurement: &Measurement) -> Result<f64, SolverError> {
    let prob = Problem::new(measurement, dictionary)?;
    let e = evaluate(&prob, &state.z, &state.w, state.mu, &state.x0);
    Ok(-e.value - state.epsilon * state.z.norm())
}

/// Value and gradient `(∂/∂z, ∂/∂w)` of the smooth dual part `g_sm`.
pub fn smooth_dual_part(
    z: &DVector<f64>,
    w: &DVector<f64>,
    mu: f64,
    x0: &DVector<f64>,
    dictionary: &Dictionary,
    measurement: &Measurement,
) -> Result<(f64, DVector<f64>, DVector<f64>), SolverError> {
    let prob = Problem::new(measurement, dictionary)?;
    let e = evaluate(&prob, z, w, mu, x0);
    Ok((e.value, e.grad_z, e.grad_w))
}

struct StepOutcome {
    dual_value: f64,
    residual: f64,
}

fn step_in_place(prob: &Problem<'_>, st: &mut SdcoState, rule: ShrinkRule, gamma: f64, iter: usize) -> Result<StepOutcome, SolverError> {
    let c = st.c;
    let yz = &st.s_z * (1.0 - c) + &st.z * c;
    let yw = &st.s_w * (1.0 - c) + &st.w * c;
    let (at, x_y) = evaluate_with_x(prob, &yz, &yw, st.mu, &st.x0);
    if !at.value.is_finite() {
        return Err(SolverError::NonFinite { iter, what: "dual objective" });
    }
    let mut l = st.lipschitz;
    let (z_new, w_new, s_z, s_w, next) = loop {
        let t = 1.0 / (c * l);
        let z_new = l2_shrink(&(&st.z - &at.grad_z * t), rule.factor() * st.epsilon * t);
        let w_new = (&st.w - &at.grad_w * t).map(|v| v.max(0.0));
        let s_z = &st.s_z * (1.0 - c) + &z_new * c;
        let s_w = &st.s_w * (1.0 - c) + &w_new * c;
        let next = evaluate(prob, &s_z, &s_w, st.mu, &st.x0);
        let dz = &s_z - &yz;
        let dw = &s_w - &yw;
        let bound = at.value + at.grad_z.dot(&dz) + at.grad_w.dot(&dw) + 0.5 * l * (dz.norm_squared() + dw.norm_squared());
        if next.value <= bound + 1e-12 * at.value.abs().max(1.0) {
            break (z_new, w_new, s_z, s_w, next);
        }
        l /= gamma;
        if l > LIPSCHITZ_CEILING {
            return Err(SolverError::LipschitzOverflow { iter, lipschitz: l });
        }
    };
    check_finite(&z_new, iter, "dual iterate")?;
    st.lipschitz = l;
    st.x_bar = &st.x_bar * (1.0 - c) + x_y * c;
    st.c = 2.0 / (1.0 + (1.0 + 4.0 / (c * c)).sqrt());
    let dual_value = -next.value - st.epsilon * s_z.norm();
    st.z = z_new;
    st.w = w_new;
    st.s_z = s_z;
    st.s_w = s_w;
    Ok(StepOutcome { dual_value, residual: (&prob.y - prob.h * &st.x_bar).norm() })
}

/// One accelerated dual step with backtracking on `L`.
pub fn sdco_step(
    state: &SdcoState,
    dictionary: &Dictionary,
    measurement: &Measurement,
    rule: ShrinkRule,
    gamma: f64,
) -> Result<SdcoState, SolverError> {
    let prob = Problem::new(measurement, dictionary)?;
    let mut next = state.clone();
    step_in_place(&prob, &mut next, rule, gamma, 0)?;
    Ok(next)
}

fn run_rounds(
    prob: &Problem<'_>,
    state: &mut SdcoState,
    config: &SdcoConfig,
    trace: &mut Vec<TraceRow>,
    observer: &mut dyn FnMut(usize, &DVector<f64>),
) -> Result<bool, SolverError> {
    let mut prev = f64::NAN;
    for _ in 0..config.max_iters {
        let k = trace.len() + 1;
        let out = step_in_place(prob, state, config.shrink, config.gamma, k)?;
        trace.push(TraceRow {
            residual_primal: Some(out.residual),
            mu1: Some(state.mu),
            step: Some(1.0 / state.lipschitz),
            ..TraceRow::new(k, out.dual_value)
        });
        observer(k, &state.x_bar);
        if (out.dual_value - prev).abs() <= config.tol * out.dual_value.abs().max(1.0) {
            return Ok(true);
        }
        prev = out.dual_value;
    }
    Ok(false)
}

pub fn solve_sdco(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &SdcoConfig,
) -> Result<SolverResult, SolverError> {
    solve_sdco_observed(measurement, dictionary, &SdcoConfig { rounds: 1, ..*config }, &mut |_, _| {})
}

pub fn solve_sdco_continuation(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &SdcoConfig,
) -> Result<SolverResult, SolverError> {
    solve_sdco_observed(measurement, dictionary, config, &mut |_, _| {})
}

/// Runs `config.rounds` solves with `μ_j = μ·decay^j`. Each round keeps the
/// duals and `L`, restarts the acceleration (`c = 1`, averaged point = current
/// point) and re-centers the prox term at the previous round's estimate.
pub fn solve_sdco_observed(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &SdcoConfig,
    observer: Observer<'_>,
) -> Result<SolverResult, SolverError> {
    config.validate()?;
    let prob = Problem::new(measurement, dictionary)?;
    let eps = config.epsilon_for(measurement);
    let mut state = SdcoState::initial(dictionary, config.mu, config.lipschitz0, eps);
    let mut trace = Vec::new();
    let mut converged = false;
    for j in 0..config.rounds {
        if j > 0 {
            state.x0 = state.x_bar.clone();
            state.mu *= config.mu_decay;
            state.c = 1.0;
            state.s_z = state.z.clone();
            state.s_w = state.w.clone();
        }
        converged = run_rounds(&prob, &mut state, config, &mut trace, observer)?;
    }
    let iterations = trace.len();
    Ok(SolverResult {
        x_hat: GroupedVector::new(state.x_bar)?,
        trace,
        iterations,
        converged,
    })
}
