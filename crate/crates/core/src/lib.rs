//! Group-sparsity solvers for the off-grid direction-of-arrival model.
//!
//! The measurement is the vectorized array covariance `y = G x + σ_n 1_n`
//! where `G = [A, B]` stacks the on-grid Kronecker atoms and their
//! first-order off-grid corrections, and `x = (s, p)` is a real vector of
//! `N` two-element groups `{s_i, p_i}` constrained to `s ≥ 0, |p| ≤ r s`.
//!
//! Four first-order solvers are provided:
//!
//! * [`solver::cadmm`]: consensus ADMM on the least-squares / group-lasso form,
//! * [`solver::aspg`]: accelerated smoothing proximal gradient (L1 and L2
//!   smoothed penalties),
//! * [`solver::egt`]: excessive-gap primal-dual method on the `‖y − Gx‖₂`
//!   surrogate,
//! * [`solver::sdco`]: smoothed dual conic solver for the quadratically
//!   constrained problem, with continuation.
//!
//! Supporting modules build the array model ([`array`]), simulate snapshots
//! ([`signal`]), implement the shared projections and proximal maps
//! ([`prox`]) and extract / score DoA estimates ([`metrics`]).

pub mod array;
pub mod metrics;
pub mod prox;
pub mod signal;
pub mod solver;

pub use nalgebra::{DMatrix, DVector};

/// Complex sample type used throughout the array model.
pub type C64 = nalgebra::Complex<f64>;

pub use array::{
    build_dictionary, constraint_matrix, steering_vector, vectorize_covariance, AngularGrid,
    ArrayGeometry, BColumn, ConstraintMatrix, Dictionary, ModelError,
};
pub use metrics::{
    music_spectrum, reconstruction_error, recover_doas, rmse, rmse_angles, DoAEstimate, MetricsError,
};
pub use prox::{GroupedVector, PenaltyVariant, ProxError, SmoothedPenalty};
pub use signal::{
    assemble_measurement, sample_covariance, simulate_snapshots, Measurement, Scenario,
};
pub use solver::{
    default_eta, AspgConfig, CadmmConfig, EgtConfig, SdcoConfig, ShrinkRule, SolverError, SolverKind, SolverResult,
    TraceRow,
};
