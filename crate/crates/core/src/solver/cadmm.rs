//! Consensus ADMM for `min ½‖y − Gx‖² + η‖x‖₂,₁ + ι_X(x)`.
//!
//! The three terms each get a private copy `z_i` of `x`:
//!
//! * `z₁` solves the ridge system `(HᵀH + ρI) z₁ = Hᵀỹ + ρx − u₁`,
//! * `z₂ = GST(x − u₂/ρ, η/ρ)`,
//! * `z₃ = Proj_X(x − u₃/ρ)`,
//!
//! followed by the consensus average `x = ⅓ Σ (z_i + u_i/ρ)` and the dual
//! ascent `u_i += ρ(z_i − x)`. The returned estimate is `z₃`, which is
//! feasible by construction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{check_finite, check_positive, lasso_objective, Observer, Problem, SolverError, SolverResult, TraceRow};
use crate::array::Dictionary;
use crate::prox::{group_soft_threshold_in_place, project_feasible_in_place, GroupedVector};
use crate::signal::Measurement;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CadmmConfig {
    pub rho: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
}

impl Default for CadmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eta: 1.0,
            max_iters: 5000,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
        }
    }
}

impl CadmmConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        check_positive(self.rho, "rho")?;
        check_positive(self.eta, "eta")?;
        check_positive(self.tol_primal, "tol_primal")?;
        check_positive(self.tol_dual, "tol_dual")
    }
}

/// `(HᵀH + ρI)⁻¹` applied through the Woodbury identity, so only the small
/// `2M² × 2M²` matrix `ρI + HHᵀ` is factored.
struct RidgeSolver<'a> {
    h: &'a DMatrix<f64>,
    rho: f64,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> RidgeSolver<'a> {
    fn new(h: &'a DMatrix<f64>, rho: f64) -> Self {
        let mut small = h * h.transpose();
        for i in 0..small.nrows() {
            small[(i, i)] += rho;
        }
        let chol = Cholesky::new(small).expect("ρI + HHᵀ is positive definite for ρ > 0");
        Self { h, rho, chol }
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let hb = self.h * b;
        let t = self.chol.solve(&hb);
        (b - self.h.transpose() * t) / self.rho
    }
}

pub fn solve_cadmm(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &CadmmConfig,
) -> Result<SolverResult, SolverError> {
    solve_cadmm_observed(measurement, dictionary, config, &mut |_, _| {})
}

pub fn solve_cadmm_observed(
    measurement: &Measurement,
    dictionary: &Dictionary,
    config: &CadmmConfig,
    observer: Observer<'_>,
) -> Result<SolverResult, SolverError> {
    config.validate()?;
    let prob = Problem::new(measurement, dictionary)?;
    let n2 = 2 * prob.groups();
    let rho = config.rho;
    let ridge = RidgeSolver::new(prob.h, rho);
    let hty = prob.h.transpose() * &prob.y;

    let mut x = DVector::<f64>::zeros(n2);
    let mut u = [DVector::zeros(n2), DVector::zeros(n2), DVector::zeros(n2)];
    let mut z3 = DVector::zeros(n2);
    let mut trace = Vec::new();
    let mut converged = false;

    for k in 0..config.max_iters {
        let z1 = ridge.solve(&(&hty + &x * rho - &u[0]));
        let mut z2 = &x - &u[1] / rho;
        group_soft_threshold_in_place(&mut z2, config.eta / rho);
        z3 = &x - &u[2] / rho;
        project_feasible_in_place(&mut z3, prob.r());

        let z = [&z1, &z2, &z3];
        let mut x_new = DVector::zeros(n2);
        for i in 0..3 {
            x_new += z[i] + &u[i] / rho;
        }
        x_new /= 3.0;
        check_finite(&x_new, k, "consensus iterate")?;

        let mut primal_sq = 0.0;
        for i in 0..3 {
            let diff = z[i] - &x_new;
            primal_sq += diff.norm_squared();
            u[i] += diff * rho;
        }
        let primal = primal_sq.sqrt();
        let dual = rho * (&x_new - &x).norm();
        x = x_new;

        let objective = lasso_objective(prob.h, &prob.y, &z3, config.eta);
        trace.push(TraceRow {
            residual_primal: Some(primal),
            residual_dual: Some(dual),
            ..TraceRow::new(k + 1, objective)
        });
        observer(k + 1, &z3);
        if primal <= config.tol_primal && dual <= config.tol_dual {
            converged = true;
            break;
        }
    }

    let iterations = trace.len();
    Ok(SolverResult {
        x_hat: GroupedVector::new(z3)?,
        trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::testutil::*;

    #[test]
    fn ridge_solver_matches_direct_solve() {
        let dict = small_dictionary();
        let h = dict.real();
        let ridge = RidgeSolver::new(h, 0.7);
        let b = DVector::from_fn(h.ncols(), |i, _| ((i * 7 % 11) as f64 - 5.0) / 3.0);
        let mut full = h.transpose() * h;
        for i in 0..full.nrows() {
            full[(i, i)] += 0.7;
        }
        let want = full.lu().solve(&b).unwrap();
        assert!((ridge.solve(&b) - want).amax() < 1e-9);
    }

    #[test]
    fn zero_measurement_gives_zero() {
        let dict = small_dictionary();
        let meas = zero_measurement(&dict);
        let res = solve_cadmm(&meas, &dict, &CadmmConfig { eta: 0.1, ..Default::default() }).unwrap();
        assert!(res.iterations <= 5);
        assert!(res.converged);
        assert!(res.x_hat.as_vector().amax() <= 1e-10);
    }

    #[test]
    fn noiseless_on_grid_single_source() {
        let dict = small_dictionary();
        let (meas, x_true) = on_grid(&dict, &[6], 2.0);
        let cfg = CadmmConfig { eta: 1e-3, max_iters: 20000, tol_primal: 1e-9, tol_dual: 1e-9, ..Default::default() };
        let res = solve_cadmm(&meas, &dict, &cfg).unwrap();
        let norms = res.x_hat.group_norms();
        let peak = (0..norms.len()).max_by(|&a, &b| norms[a].total_cmp(&norms[b])).unwrap();
        assert_eq!(peak, 6);
        let s_err = (res.x_hat.as_vector().rows(0, 16) - x_true.rows(0, 16)).norm() / 2.0;
        assert!(s_err <= 1e-2, "relative power error {s_err}");
    }

    #[test]
    fn z3_feasible_and_residuals_shrink() {
        let (dict, meas) = small_noisy(3);
        let c = crate::array::ConstraintMatrix::new(16, dict.grid().r());
        let mut feasible = true;
        let cfg = CadmmConfig { eta: 0.3, ..Default::default() };
        let res = solve_cadmm_observed(&meas, &dict, &cfg, &mut |_, z3| {
            feasible &= c.is_feasible(z3, 0.0);
        })
        .unwrap();
        assert!(feasible);
        assert!(res.converged, "{} iterations", res.iterations);
        assert_eq!(res.trace.len(), res.iterations);
        let obj = res.objective_trace();
        let n = obj.len();
        assert!((obj[n - 1] - obj[n - 2]).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let dict = small_dictionary();
        let meas = zero_measurement(&dict);
        for cfg in [
            CadmmConfig { rho: 0.0, ..Default::default() },
            CadmmConfig { eta: -1.0, ..Default::default() },
            CadmmConfig { tol_dual: 0.0, ..Default::default() },
        ] {
            assert!(matches!(solve_cadmm(&meas, &dict, &cfg), Err(SolverError::InvalidConfig(_))));
        }
    }
}
