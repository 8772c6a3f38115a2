//! Excessive-gap primal-dual method for `min ‖ỹ − Hx‖₂ + η‖x‖₂,₁` over `X`.
//!
//! Both sides are written as the saddle function
//! `⟨Hx − ỹ, u₁⟩ + η⟨x, u₂⟩` with `u₁` in the unit ball and `u₂` in a product
//! of group unit balls. The primal side is smoothed with `μ₁/2‖x‖²`, the dual
//! side with `μ₂/2‖u‖²`, and the two parameters are decreased alternately
//! while the excessive gap condition `F_μ₂(x̄) ≤ Φ_μ₁(ū)` is maintained.
//!
//! `X` is intersected with the box `s ≤ S_max = trace(R̂)` so the primal
//! diameter `D₁ = N·S_max²·(1 + r²)` is finite.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{check_finite, check_positive, Observer, Problem, SolverError, SolverResult, TraceRow};
use crate::array::Dictionary;
use crate::prox::{
    l21_norm, proj_group_l2_ball_in_place, proj_l2_ball_in_place, project_boxed_in_place, spectral_norm, GroupedVector,
};
use crate::signal::Measurement;

/// Slack allowed in the excessive gap check.
pub const EGC_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgtConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Stop once the duality gap `F(x̄) − Φ(ū)` falls below this value.
    pub tol_gap: f64,
    /// Multiplier on the starting `μ₁`.
    pub mu1_factor: f64,
    /// Box bound on `s`; `None` uses the total received power.
    pub s_max: Option<f64>,
    /// Abort when the excessive gap condition fails.
    pub check_egc: bool,
}

impl Default for EgtConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            max_iters: 2000,
            tol_gap: 1e-6,
            mu1_factor: 2.0,
            s_max: None,
            check_egc: true,
        }
    }
}

impl EgtConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        check_positive(self.eta, "eta")?;
        check_positive(self.tol_gap, "tol_gap")?;
        check_positive(self.mu1_factor, "mu1_factor")?;
        if let Some(s) = self.s_max {
            check_positive(s, "s_max")?;
        }
        Ok(())
    }
}

/// Dual point `(u₁, u₂)`: `u₁` has the length of `ỹ`, `u₂` that of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
}

impl DualPoint {
    fn lerp(&self, other: &DualPoint, tau: f64) -> DualPoint {
        DualPoint {
            u1: &self.u1 * (1.0 - tau) + &other.u1 * tau,
            u2: &self.u2 * (1.0 - tau) + &other.u2 * tau,
        }
    }

    /// Whether both blocks lie in their balls, up to `tol`.
    pub fn is_admissible(&self, tol: f64) -> bool {
        let n = self.u2.len() / 2;
        self.u1.norm() <= 1.0 + tol && (0..n).all(|i| self.u2[i].hypot(self.u2[i + n]) <= 1.0 + tol)
    }
}

/// Primal/dual data of one problem instance.
pub struct EgtProblem<'a> {
    h: &'a nalgebra::DMatrix<f64>,
    y: &'a DVector<f64>,
    eta: f64,
    r: f64,
    s_max: f64,
}

impl<'a> EgtProblem<'a> {
    pub fn new(h: &'a nalgebra::DMatrix<f64>, y: &'a DVector<f64>, eta: f64, r: f64, s_max: f64) -> Self {
        Self { h, y, eta, r, s_max }
    }

    fn groups(&self) -> usize {
        self.h.ncols() / 2
    }

    /// `D₁ = max ‖x‖²` over the boxed feasible set.
    pub fn d1(&self) -> f64 {
        self.groups() as f64 * self.s_max * self.s_max * (1.0 + self.r * self.r)
    }

    /// `D₂ + D₃ = 1 + N`.
    pub fn d23(&self) -> f64 {
        1.0 + self.groups() as f64
    }

    /// Unsmoothed primal `‖Hx − ỹ‖ + η‖x‖₂,₁`.
    pub fn primal(&self, x: &DVector<f64>) -> f64 {
        (self.h * x - self.y).norm() + self.eta * l21_norm(x)
    }

    fn dual_direction(&self, u: &DualPoint) -> DVector<f64> {
        self.h.transpose() * &u.u1 + &u.u2 * self.eta
    }

    /// Unsmoothed dual `−⟨ỹ, u₁⟩ + min_{x ∈ X_box} ⟨Hᵀu₁ + ηu₂, x⟩`.
    pub fn dual(&self, u: &DualPoint) -> f64 {
        let c = self.dual_direction(u);
        let n = self.groups();
        let inner: f64 = (0..n)
            .map(|i| self.s_max * (c[i] - self.r * c[i + n].abs()).min(0.0))
            .sum();
        -self.y.dot(&u.u1) + inner
    }

    /// Maximizer `u_μ₂(x)` of the smoothed primal.
    pub fn u_mu2(&self, x: &DVector<f64>, mu2: f64) -> DualPoint {
        let mut u1 = (self.h * x - self.y) / mu2;
        proj_l2_ball_in_place(&mut u1);
        let mut u2 = x * (self.eta / mu2);
        proj_group_l2_ball_in_place(&mut u2);
        DualPoint { u1, u2 }
    }

    /// Minimizer `x_μ₁(u)` of the smoothed dual.
    pub fn x_mu1(&self, u: &DualPoint, mu1: f64) -> DVector<f64> {
        let mut x = self.dual_direction(u) / (-mu1);
        project_boxed_in_place(&mut x, self.r, self.s_max);
        x
    }
}

/// `F_μ₂(x)` and its gradient `Hᵀu₁ + ηu₂` at the maximizer.
pub fn smoothed_primal(p: &EgtProblem<'_>, x: &DVector<f64>, mu2: f64) -> (f64, DVector<f64>) {
    let u = p.u_mu2(x, mu2);
    let value = (p.h * x - p.y).dot(&u.u1) + p.eta * x.dot(&u.u2)
        - 0.5 * mu2 * (u.u1.norm_squared() + u.u2.norm_squared());
    (value, p.dual_direction(&u))
}

/// `Φ_μ₁(u)` and its gradient `(H x_μ₁ − ỹ, η x_μ₁)`.
pub fn smoothed_dual(p: &EgtProblem<'_>, u: &DualPoint, mu1: f64) -> Result<(f64, DualPoint), SolverError> {
    if !u.is_admissible(1e-12) {
        return Err(SolverError::InvalidConfig("dual point outside its unit balls".into()));
    }
    let x = p.x_mu1(u, mu1);
    let c = p.dual_direction(u);
    let value = -p.y.dot(&u.u1) + c.dot(&x) + 0.5 * mu1 * x.norm_squared();
    let grad = DualPoint { u1: p.h * &x - p.y, u2: &x * p.eta };
    Ok((value, grad))
}

pub fn solve_egt(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &EgtConfig,
) -> Result<SolverResult, SolverError> {
    solve_egt_observed(measurement, dictionary, config, &mut |_, _| {})
}

pub fn solve_egt_observed(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &EgtConfig,
    observer: Observer<'_>,
) -> Result<SolverResult, SolverError> {
    config.validate()?;
    let prob = Problem::new(measurement, dictionary)?;
    let s_max = config.s_max.unwrap_or_else(|| measurement.total_power());
    check_positive(s_max, "s_max")?;
    let p = EgtProblem::new(prob.h, &prob.y, config.eta, prob.r(), s_max);

    // ‖[H; ηI]‖² = ‖H‖² + η².
    let norm_sq = spectral_norm(prob.h).powi(2) + config.eta * config.eta;
    let norm = norm_sq.sqrt();
    let mut mu1 = config.mu1_factor * norm * (p.d23() / p.d1()).sqrt();
    let mut mu2 = norm * (p.d1() / p.d23()).sqrt();

    let x0 = DVector::<f64>::zeros(2 * prob.groups());
    let mut u_bar = p.u_mu2(&x0, mu2);
    let mut x_bar = primal_step(&p, &x0, mu2, norm_sq);

    let mut trace = Vec::new();
    let mut converged = false;
    for k in 0..config.max_iters {
        let tau = 2.0 / (k as f64 + 3.0);
        if k % 2 == 0 {
            let x_hat = &x_bar * (1.0 - tau) + p.x_mu1(&u_bar, mu1) * tau;
            u_bar = u_bar.lerp(&p.u_mu2(&x_hat, mu2), tau);
            x_bar = primal_step(&p, &x_hat, mu2, norm_sq);
            mu1 *= 1.0 - tau;
        } else {
            let u_hat = u_bar.lerp(&p.u_mu2(&x_bar, mu2), tau);
            x_bar = &x_bar * (1.0 - tau) + p.x_mu1(&u_hat, mu1) * tau;
            u_bar = dual_step(&p, &u_hat, mu1, norm_sq)?;
            mu2 *= 1.0 - tau;
        }
        check_finite(&x_bar, k, "primal iterate")?;
        check_finite(&u_bar.u1, k, "dual iterate")?;

        let f_mu2 = smoothed_primal(&p, &x_bar, mu2).0;
        let phi_mu1 = smoothed_dual(&p, &u_bar, mu1)?.0;
        if config.check_egc && f_mu2 > phi_mu1 + EGC_SLACK {
            return Err(SolverError::ExcessiveGap { iter: k, primal: f_mu2, dual: phi_mu1 });
        }
        let objective = p.primal(&x_bar);
        let gap = objective - p.dual(&u_bar);
        trace.push(TraceRow {
            gap: Some(gap),
            mu1: Some(mu1),
            mu2: Some(mu2),
            ..TraceRow::new(k + 1, objective)
        });
        observer(k + 1, &x_bar);
        if gap <= config.tol_gap {
            converged = true;
            break;
        }
    }

    let iterations = trace.len();
    Ok(SolverResult {
        x_hat: GroupedVector::new(x_bar)?,
        trace,
        iterations,
        converged,
    })
}

/// `T_μ₂(x) = Proj_X(x − ∇F_μ₂(x)/L₁)`, `L₁ = ‖[H; ηI]‖²/μ₂`.
fn primal_step(p: &EgtProblem<'_>, x: &DVector<f64>, mu2: f64, norm_sq: f64) -> DVector<f64> {
    let (_, grad) = smoothed_primal(p, x, mu2);
    let mut out = x - grad * (mu2 / norm_sq);
    project_boxed_in_place(&mut out, p.r, p.s_max);
    out
}

/// `T_μ₁(u) = Proj_U(u + ∇Φ_μ₁(u)/L₂)`, `L₂ = ‖[H; ηI]‖²/μ₁`; an ascent
/// step since `Φ_μ₁` is maximized.
fn dual_step(p: &EgtProblem<'_>, u: &DualPoint, mu1: f64, norm_sq: f64) -> Result<DualPoint, SolverError> {
    let (_, grad) = smoothed_dual(p, u, mu1)?;
    let step = mu1 / norm_sq;
    let mut u1 = &u.u1 + grad.u1 * step;
    proj_l2_ball_in_place(&mut u1);
    let mut u2 = &u.u2 + grad.u2 * step;
    proj_group_l2_ball_in_place(&mut u2);
    Ok(DualPoint { u1, u2 })
}
