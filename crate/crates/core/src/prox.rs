//! Projections, proximal maps and smoothed penalties shared by the solvers.
//!
//! Vectors of length `2N` are split into `N` groups `{i, i + N}`, i.e. the
//! pair `(s_i, p_i)`. The in-place variants work on a raw [`DVector`] and
//! are what the solvers call in their inner loops.

use nalgebra::{ComplexField, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProxError {
    #[error("grouped vector needs an even, nonzero length, got {0}")]
    OddLength(usize),
    #[error("smoothing parameter must be positive, got {0}")]
    BadMu(f64),
    #[error("regularization weight must be non-negative, got {0}")]
    BadEta(f64),
    #[error("operator norm of an empty or zero matrix")]
    ZeroMatrix,
    #[error("power iteration did not converge after {iterations} steps (estimate {estimate})")]
    NotConverged { iterations: usize, estimate: f64 },
}

/// Real vector `x = (s, p)` of `N` two-element groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedVector {
    data: DVector<f64>,
}

impl GroupedVector {
    pub fn new(data: DVector<f64>) -> Result<Self, ProxError> {
        if data.is_empty() || data.len() % 2 != 0 {
            return Err(ProxError::OddLength(data.len()));
        }
        Ok(Self { data })
    }

    pub fn zeros(groups: usize) -> Self {
        Self {
            data: DVector::zeros(2 * groups),
        }
    }

    /// Builds `(s, p)` from its two halves.
    pub fn from_parts(s: &[f64], p: &[f64]) -> Result<Self, ProxError> {
        if s.len() != p.len() {
            return Err(ProxError::OddLength(s.len() + p.len()));
        }
        Self::new(DVector::from_iterator(
            2 * s.len(),
            s.iter().chain(p.iter()).copied(),
        ))
    }

    pub fn groups(&self) -> usize {
        self.data.len() / 2
    }

    pub fn group(&self, i: usize) -> [f64; 2] {
        [self.data[i], self.data[i + self.groups()]]
    }

    pub fn set_group(&mut self, i: usize, g: [f64; 2]) {
        let n = self.groups();
        self.data[i] = g[0];
        self.data[i + n] = g[1];
    }

    pub fn s(&self) -> &[f64] {
        &self.data.as_slice()[..self.groups()]
    }

    pub fn p(&self) -> &[f64] {
        &self.data.as_slice()[self.groups()..]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    pub fn group_norms(&self) -> Vec<f64> {
        let n = self.groups();
        (0..n).map(|i| self.data[i].hypot(self.data[i + n])).collect()
    }

    /// `‖x‖₂,₁`.
    pub fn l21_norm(&self) -> f64 {
        l21_norm(&self.data)
    }
}

impl From<GroupedVector> for DVector<f64> {
    fn from(g: GroupedVector) -> Self {
        g.data
    }
}

/// `‖x‖₂,₁ = Σ_i ‖(x_i, x_{i+N})‖₂`.
pub fn l21_norm(x: &DVector<f64>) -> f64 {
    let n = x.len() / 2;
    (0..n).map(|i| x[i].hypot(x[i + n])).sum()
}

/// Projection of one `(s, p)` pair onto the cone `|p| ≤ r s`.
pub fn project_cone_pair(s: f64, p: f64, r: f64) -> (f64, f64) {
    let ap = p.abs();
    if s >= 0.0 && ap <= r * s {
        (s, p)
    } else if s <= -r * ap {
        (0.0, 0.0)
    } else {
        let s_new = ((s + r * ap) / (1.0 + r * r)).max(0.0);
        (s_new, r * p.signum() * s_new)
    }
}

fn project_segment(q: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let d = (b.0 - a.0, b.1 - a.1);
    let len2 = d.0 * d.0 + d.1 * d.1;
    let t = (((q.0 - a.0) * d.0 + (q.1 - a.1) * d.1) / len2).clamp(0.0, 1.0);
    (a.0 + t * d.0, a.1 + t * d.1)
}

/// Projection of one pair onto the triangle `0 ≤ s ≤ s_max, |p| ≤ r s`.
pub fn project_box_pair(s: f64, p: f64, r: f64, s_max: f64) -> (f64, f64) {
    if s >= 0.0 && s <= s_max && p.abs() <= r * s {
        return (s, p);
    }
    let o = (0.0, 0.0);
    let up = (s_max, r * s_max);
    let down = (s_max, -r * s_max);
    let mut best = (0.0, 0.0);
    let mut best_d = f64::INFINITY;
    for (a, b) in [(o, up), (up, down), (down, o)] {
        let c = project_segment((s, p), a, b);
        let dist = (c.0 - s).powi(2) + (c.1 - p).powi(2);
        if dist < best_d {
            best_d = dist;
            best = c;
        }
    }
    best
}

/// In-place projection onto `X = {s ≥ 0, |p| ≤ r s}`.
pub fn project_feasible_in_place(v: &mut DVector<f64>, r: f64) {
    let n = v.len() / 2;
    for i in 0..n {
        let (s, p) = project_cone_pair(v[i], v[i + n], r);
        v[i] = s;
        v[i + n] = p;
    }
}

/// In-place projection onto `X ∩ {s ≤ s_max}`.
pub fn project_boxed_in_place(v: &mut DVector<f64>, r: f64, s_max: f64) {
    let n = v.len() / 2;
    for i in 0..n {
        let (s, p) = project_box_pair(v[i], v[i + n], r, s_max);
        v[i] = s;
        v[i + n] = p;
    }
}

/// Euclidean projection onto the feasible set `X`, group by group.
pub fn project_feasible(v: &GroupedVector, r: f64) -> GroupedVector {
    let mut out = v.data.clone();
    project_feasible_in_place(&mut out, r);
    GroupedVector { data: out }
}

/// Scales each group into the unit ℓ2 ball. Groups already inside are kept.
pub fn proj_group_l2_ball_in_place(a: &mut DVector<f64>) {
    let n = a.len() / 2;
    for i in 0..n {
        let norm = a[i].hypot(a[i + n]);
        if norm > 1.0 {
            a[i] /= norm;
            a[i + n] /= norm;
        }
    }
}

pub fn proj_group_l2_ball(a: &GroupedVector) -> GroupedVector {
    let mut out = a.data.clone();
    proj_group_l2_ball_in_place(&mut out);
    GroupedVector { data: out }
}

/// Element-wise clamp to `[-1, 1]`.
pub fn proj_linf_ball(a: &DVector<f64>) -> DVector<f64> {
    a.map(|v| v.clamp(-1.0, 1.0))
}

/// Projection onto the Euclidean unit ball.
pub fn proj_l2_ball_in_place(a: &mut DVector<f64>) {
    let norm = a.norm();
    if norm > 1.0 {
        *a /= norm;
    }
}

/// Group soft-thresholding, the proximal map of `t ‖·‖₂,₁`.
pub fn group_soft_threshold_in_place(x: &mut DVector<f64>, t: f64) {
    let n = x.len() / 2;
    for i in 0..n {
        let norm = x[i].hypot(x[i + n]);
        let scale = if norm > t { (norm - t) / norm } else { 0.0 };
        x[i] *= scale;
        x[i + n] *= scale;
    }
}

pub fn group_soft_threshold(x: &GroupedVector, t: f64) -> GroupedVector {
    let mut out = x.data.clone();
    group_soft_threshold_in_place(&mut out, t);
    GroupedVector { data: out }
}

/// `max(1 − t/‖x‖₂, 0) · x`, the proximal map of `t ‖·‖₂`.
pub fn l2_shrink<T: ComplexField<RealField = f64>>(x: &DVector<T>, t: f64) -> DVector<T> {
    let norm = x.norm();
    if norm <= t {
        return DVector::zeros(x.len());
    }
    x * T::from_real(1.0 - t / norm)
}

/// Which dual-norm reformulation of `η‖x‖₂,₁` is smoothed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyVariant {
    /// `max_{‖u‖_∞ ≤ 1} η⟨ν, u⟩` over the group norms `ν`; gradient zero-padded on `p`.
    L1,
    /// `max_{u ∈ ×_i B₂} η⟨x, u⟩` over a product of unit ℓ2 balls.
    L2,
}

/// Nesterov-smoothed group penalty `h_μ` with prox-function `½‖u‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedPenalty {
    pub eta: f64,
    pub mu: f64,
    pub variant: PenaltyVariant,
}

impl SmoothedPenalty {
    pub fn new(eta: f64, mu: f64, variant: PenaltyVariant) -> Result<Self, ProxError> {
        if !(mu > 0.0) {
            return Err(ProxError::BadMu(mu));
        }
        if !(eta >= 0.0) {
            return Err(ProxError::BadEta(eta));
        }
        Ok(Self { eta, mu, variant })
    }

    /// `max_u ½‖u‖²` over the dual set; `N/2` for both variants.
    pub fn diameter(groups: usize) -> f64 {
        groups as f64 / 2.0
    }

    /// Value and gradient at `x`; `grad` must have the length of `x`.
    pub fn eval_into(&self, x: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        let n = x.len() / 2;
        let ratio = self.eta / self.mu;
        let mut value = 0.0;
        match self.variant {
            PenaltyVariant::L2 => {
                for i in 0..n {
                    let (s, p) = (x[i], x[i + n]);
                    let (mut us, mut up) = (ratio * s, ratio * p);
                    let norm = us.hypot(up);
                    if norm > 1.0 {
                        us /= norm;
                        up /= norm;
                    }
                    value += self.eta * (s * us + p * up) - 0.5 * self.mu * (us * us + up * up);
                    grad[i] = self.eta * us;
                    grad[i + n] = self.eta * up;
                }
            }
            PenaltyVariant::L1 => {
                for i in 0..n {
                    let nu = x[i].hypot(x[i + n]);
                    let u = (ratio * nu).clamp(-1.0, 1.0);
                    value += self.eta * nu * u - 0.5 * self.mu * u * u;
                    grad[i] = self.eta * u;
                    grad[i + n] = 0.0;
                }
            }
        }
        value
    }

    /// Value and the true gradient. Identical to [`Self::eval_into`] for
    /// the L2 variant; for L1 the chain rule through `ν_i = ‖x_{g_i}‖` gives
    /// `η u_i x_{g_i}/ν_i` on both blocks instead of the zero-padded form.
    pub fn eval_exact_into(&self, x: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        let value = self.eval_into(x, grad);
        if self.variant == PenaltyVariant::L1 {
            let n = x.len() / 2;
            for i in 0..n {
                let nu = x[i].hypot(x[i + n]);
                let g = grad[i];
                if nu > 0.0 {
                    grad[i] = g * x[i] / nu;
                    grad[i + n] = g * x[i + n] / nu;
                } else {
                    grad[i] = 0.0;
                    grad[i + n] = 0.0;
                }
            }
        }
        value
    }
}

/// Value and gradient of the smoothed penalty.
///
/// The L1 gradient is `[η u; 0]`: it is exact only in the `s` block, the
/// `p` block is zero-padded.
pub fn smoothed_penalty_value_grad(
    x: &GroupedVector,
    pen: &SmoothedPenalty,
) -> Result<(f64, DVector<f64>), ProxError> {
    if !(pen.mu > 0.0) {
        return Err(ProxError::BadMu(pen.mu));
    }
    let mut grad = DVector::zeros(x.data.len());
    let value = pen.eval_into(&x.data, &mut grad);
    Ok((value, grad))
}

const POWER_MAX_ITERS: usize = 500;

/// Spectral norm by power iteration on the smaller Gram matrix (squared).
pub fn operator_norm<T>(m: &DMatrix<T>) -> Result<f64, ProxError>
where
    T: ComplexField<RealField = f64>,
{
    if m.is_empty() || m.iter().all(|v| v.clone().modulus() == 0.0) {
        return Err(ProxError::ZeroMatrix);
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    // Iterating on the squared Gram matrix doubles the eigen-gap exponent.
    let gram = &gram * &gram;
    let k = gram.nrows();
    let mut v = DVector::<T>::from_fn(k, |i, _| T::from_real(1.0 + 0.1 * ((i + 1) as f64).sin()));
    v /= T::from_real(v.norm());
    let mut lambda = 0.0;
    for it in 0..POWER_MAX_ITERS {
        let w = &gram * &v;
        // Rayleigh quotient: error decays with the square of the eigen-gap ratio.
        let rayleigh = v.dotc(&w).real();
        let norm = w.norm();
        if norm == 0.0 {
            return Err(ProxError::ZeroMatrix);
        }
        v = w / T::from_real(norm);
        if it > 0 && (rayleigh - lambda).abs() <= 1e-13 * rayleigh {
            return Ok(rayleigh.sqrt().sqrt());
        }
        lambda = rayleigh;
    }
    Err(ProxError::NotConverged {
        iterations: POWER_MAX_ITERS,
        estimate: lambda.sqrt().sqrt(),
    })
}

/// Spectral norm from the eigenvalues of the smaller Gram matrix. Exact up
/// to rounding; the solvers use it for step sizes and Lipschitz constants.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let eig = nalgebra::SymmetricEigen::new(gram);
    eig.eigenvalues.iter().copied().fold(0.0, f64::max).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gv(v: &[f64]) -> GroupedVector {
        GroupedVector::new(DVector::from_column_slice(v)).unwrap()
    }

    #[test]
    fn grouped_vector_layout() {
        let x = GroupedVector::from_parts(&[1.0, 2.0], &[0.1, 0.2]).unwrap();
        assert_eq!(x.groups(), 2);
        assert_eq!(x.group(1), [2.0, 0.2]);
        assert_eq!(x.s(), &[1.0, 2.0]);
        assert_eq!(x.p(), &[0.1, 0.2]);
        assert!(GroupedVector::new(DVector::zeros(3)).is_err());
        assert!(GroupedVector::new(DVector::zeros(0)).is_err());
        assert_relative_eq!(gv(&[3.0, 0.0, 4.0, 1.0]).l21_norm(), 6.0);
    }

    #[test]
    fn feasible_projection_examples() {
        assert_eq!(project_cone_pair(1.0, 0.1, 0.25), (1.0, 0.1));
        assert_eq!(project_cone_pair(-1.0, 0.0, 0.25), (0.0, 0.0));
        let (s, p) = project_cone_pair(0.5, 1.0, 0.25);
        assert_relative_eq!(s, 0.75 / 1.0625, epsilon = 1e-15);
        assert_relative_eq!(s, 0.705_882_352_941_176_5, epsilon = 1e-12);
        assert_relative_eq!(p, 0.176_470_588_235_294_13, epsilon = 1e-12);
    }

    /// Exhaustive-candidate oracle: the projection onto a 2-D polyhedral cone
    /// is the interior point itself, the apex, or the projection onto one of
    /// the two boundary rays. Pick the closest feasible candidate.
    fn cone_oracle(s: f64, p: f64, r: f64) -> (f64, f64) {
        let mut cands = vec![(0.0, 0.0)];
        if s >= 0.0 && p.abs() <= r * s {
            cands.push((s, p));
        }
        for sign in [1.0, -1.0] {
            let dir = (1.0 / (1.0 + r * r).sqrt(), sign * r / (1.0 + r * r).sqrt());
            let t = (s * dir.0 + p * dir.1).max(0.0);
            cands.push((t * dir.0, t * dir.1));
        }
        cands
            .into_iter()
            .min_by(|a, b| {
                let da = (a.0 - s).powi(2) + (a.1 - p).powi(2);
                let db = (b.0 - s).powi(2) + (b.1 - p).powi(2);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
    }

    #[test]
    fn feasible_projection_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &r in &[0.1, 0.25, 1.0] {
            for _ in 0..1000 {
                let s = rng.random_range(-3.0..3.0);
                let p = rng.random_range(-3.0..3.0);
                let got = project_cone_pair(s, p, r);
                let want = cone_oracle(s, p, r);
                assert!((got.0 - want.0).abs() <= 1e-12 && (got.1 - want.1).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn box_projection_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (r, smax) = (0.25, 2.0);
        for _ in 0..200 {
            let s = rng.random_range(-2.0..5.0);
            let p = rng.random_range(-3.0..3.0);
            let got = project_box_pair(s, p, r, smax);
            // Dense feasible sampling of the triangle.
            let mut best = f64::INFINITY;
            let steps = 400;
            for a in 0..=steps {
                let ss = smax * a as f64 / steps as f64;
                for b in 0..=40 {
                    let pp = r * ss * (2.0 * b as f64 / 40.0 - 1.0);
                    best = best.min((ss - s).powi(2) + (pp - p).powi(2));
                }
            }
            let d = (got.0 - s).powi(2) + (got.1 - p).powi(2);
            assert!(got.0 >= 0.0 && got.0 <= smax && got.1.abs() <= r * got.0 + 1e-15);
            assert!(d <= best + 1e-9, "{d} > {best}");
        }
    }

    #[test]
    fn ball_projection_examples() {
        assert_eq!(proj_group_l2_ball(&gv(&[0.3, 0.4])), gv(&[0.3, 0.4]));
        let out = proj_group_l2_ball(&gv(&[3.0, 4.0]));
        assert_relative_eq!(out.group(0)[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(out.group(0)[1], 0.8, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = GroupedVector::new(DVector::from_fn(720, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let before = x.group_norms();
        let after = proj_group_l2_ball(&x).group_norms();
        for (b, a) in before.iter().zip(&after) {
            assert_relative_eq!(*a, b.min(1.0), epsilon = 1e-14);
        }

        let v = DVector::from_vec(vec![0.5, -0.2]);
        assert_eq!(proj_linf_ball(&v), v);
        assert_eq!(proj_linf_ball(&DVector::from_vec(vec![2.0, -3.0])), DVector::from_vec(vec![1.0, -1.0]));
        let v = DVector::from_fn(50, |i, _| (i as f64 - 25.0) / 10.0);
        let clamped = proj_linf_ball(&v);
        for (c, x) in clamped.iter().zip(v.iter()) {
            assert_eq!(*c, x.max(-1.0).min(1.0));
        }
    }

    #[test]
    fn gst_examples() {
        let x = gv(&[3.0, 0.1, 4.0, 0.0]);
        assert_eq!(group_soft_threshold(&x, 0.0), x);
        let out = group_soft_threshold(&gv(&[3.0, 4.0]), 2.0);
        assert_relative_eq!(out.group(0)[0], 1.8, epsilon = 1e-15);
        assert_relative_eq!(out.group(0)[1], 2.4, epsilon = 1e-15);
        assert_eq!(group_soft_threshold(&gv(&[0.1, 0.0]), 2.0), gv(&[0.0, 0.0]));
        assert_eq!(group_soft_threshold(&gv(&[0.0, 0.0]), 0.0), gv(&[0.0, 0.0]));
    }

    #[test]
    fn gst_is_prox_of_group_norm() {
        // Numeric inner minimization of t‖z‖ + ½‖z − x‖² over a 2-D grid,
        // refined around the best point.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let t = rng.random_range(0.0..1.5);
            let obj = |z: [f64; 2]| t * z[0].hypot(z[1]) + 0.5 * ((z[0] - x[0]).powi(2) + (z[1] - x[1]).powi(2));
            let mut center = [0.0, 0.0];
            let mut width = 4.0;
            for _ in 0..30 {
                let mut best = (f64::INFINITY, center);
                for a in -10..=10 {
                    for b in -10..=10 {
                        let z = [center[0] + width * a as f64 / 10.0, center[1] + width * b as f64 / 10.0];
                        let v = obj(z);
                        if v < best.0 {
                            best = (v, z);
                        }
                    }
                }
                center = best.1;
                width *= 0.3;
            }
            let got = group_soft_threshold(&gv(&x), t);
            // Objective differences near the optimum fall below rounding at ~1e-8.
            assert!((got.group(0)[0] - center[0]).abs() < 1e-6);
            assert!((got.group(0)[1] - center[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn shrink_examples() {
        let x = DVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(2.0, 0.0)]);
        assert_relative_eq!(x.norm(), 3.0);
        let out = l2_shrink(&x, 1.0);
        for (o, v) in out.iter().zip(x.iter()) {
            assert!((o - v * C64::from(2.0 / 3.0)).norm() < 1e-15);
        }
        assert_eq!(l2_shrink(&x, 0.0), x);
        assert_eq!(l2_shrink(&x, 3.0), DVector::zeros(2));
        assert_eq!(l2_shrink(&DVector::<f64>::zeros(3), 0.0), DVector::zeros(3));
    }

    #[test]
    fn smoothed_penalty_examples() {
        for variant in [PenaltyVariant::L1, PenaltyVariant::L2] {
            let pen = SmoothedPenalty::new(1.0, 0.5, variant).unwrap();
            let (v, g) = smoothed_penalty_value_grad(&GroupedVector::zeros(4), &pen).unwrap();
            assert_eq!(v, 0.0);
            assert_eq!(g, DVector::zeros(8));
        }
        let pen = SmoothedPenalty::new(1.0, 10.0, PenaltyVariant::L2).unwrap();
        let (v, g) = smoothed_penalty_value_grad(&gv(&[3.0, 4.0]), &pen).unwrap();
        assert_relative_eq!(v, 1.25, epsilon = 1e-14);
        assert_relative_eq!(g[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.4, epsilon = 1e-15);
        // Cross-check the maximizer with a dense search over the unit disc.
        let mut best = f64::NEG_INFINITY;
        for a in 0..=400 {
            for b in 0..=400 {
                let u = (a as f64 / 200.0 - 1.0, b as f64 / 200.0 - 1.0);
                if u.0.hypot(u.1) <= 1.0 {
                    best = best.max(3.0 * u.0 + 4.0 * u.1 - 5.0 * (u.0 * u.0 + u.1 * u.1));
                }
            }
        }
        assert_relative_eq!(best, 1.25, epsilon = 1e-12);
        assert!(SmoothedPenalty::new(1.0, 0.0, PenaltyVariant::L1).is_err());
        let bad = SmoothedPenalty { eta: 1.0, mu: -1.0, variant: PenaltyVariant::L1 };
        assert_eq!(smoothed_penalty_value_grad(&gv(&[1.0, 0.0]), &bad), Err(ProxError::BadMu(-1.0)));
    }

    fn central_difference(pen: &SmoothedPenalty, x: &DVector<f64>, k: usize, h: f64) -> f64 {
        let mut scratch = DVector::zeros(x.len());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        (pen.eval_into(&xp, &mut scratch) - pen.eval_into(&xm, &mut scratch)) / (2.0 * h)
    }

    #[test]
    fn smoothed_penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 6;
        for variant in [PenaltyVariant::L1, PenaltyVariant::L2] {
            let pen = SmoothedPenalty::new(0.7, 0.3, variant).unwrap();
            for _ in 0..20 {
                let x = DVector::from_fn(2 * n, |i, _| {
                    if i < n { rng.random_range(0.05..2.0) } else { rng.random_range(-0.3..0.3) }
                });
                let mut g = DVector::zeros(2 * n);
                pen.eval_exact_into(&x, &mut g);
                for k in 0..2 * n {
                    let fd = central_difference(&pen, &x, k, 1e-6);
                    assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-2), "{variant:?} {fd} vs {}", g[k]);
                }
                if variant == PenaltyVariant::L2 {
                    let mut padded = DVector::zeros(2 * n);
                    pen.eval_into(&x, &mut padded);
                    assert_eq!(padded, g);
                }
            }
        }
    }

    #[test]
    fn zero_padded_l1_gradient_is_exact_on_the_s_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let n = 6;
        let pen = SmoothedPenalty::new(0.7, 0.3, PenaltyVariant::L1).unwrap();
        for _ in 0..20 {
            let x = DVector::from_fn(2 * n, |i, _| if i < n { rng.random_range(0.05..2.0) } else { 0.0 });
            let mut g = DVector::zeros(2 * n);
            pen.eval_into(&x, &mut g);
            for k in 0..2 * n {
                let fd = central_difference(&pen, &x, k, 1e-6);
                assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-2));
            }
        }
    }

    #[test]
    fn smoothing_sandwich_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        for variant in [PenaltyVariant::L1, PenaltyVariant::L2] {
            for _ in 0..200 {
                let x = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0) * rng.random_range(0.0..3.0));
                let eta = rng.random_range(0.1..2.0);
                let mu = rng.random_range(0.01..2.0);
                let pen = SmoothedPenalty::new(eta, mu, variant).unwrap();
                let mut g = DVector::zeros(2 * n);
                let hmu = pen.eval_into(&x, &mut g);
                let exact = eta * l21_norm(&x);
                assert!(hmu <= exact + 1e-12);
                assert!(exact <= hmu + mu * SmoothedPenalty::diameter(n) + 1e-12);
                let bigger = SmoothedPenalty::new(eta, 2.0 * mu, variant).unwrap();
                assert!(bigger.eval_into(&x, &mut g) <= hmu + 1e-12);
            }
        }
    }

    #[test]
    fn operator_norm_examples() {
        let eye = DMatrix::<f64>::identity(4, 4);
        assert_relative_eq!(operator_norm(&eye).unwrap(), 1.0, epsilon = 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        assert_relative_eq!(operator_norm(&d).unwrap(), 3.0, epsilon = 1e-10);
        assert_eq!(operator_norm(&DMatrix::<f64>::zeros(2, 2)), Err(ProxError::ZeroMatrix));
    }

    #[test]
    fn operator_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = DMatrix::<C64>::from_fn(64, 720, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let svd = m.clone().svd(false, false);
        let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let got = operator_norm(&m).unwrap();
        assert!((got - top).abs() / top <= 1e-6, "{got} vs {top}");
    }

    proptest! {
        #[test]
        fn projections_idempotent_and_nonexpansive(
            a in proptest::collection::vec(-5.0f64..5.0, 8),
            b in proptest::collection::vec(-5.0f64..5.0, 8),
            r in 0.05f64..2.0,
        ) {
            let (a, b) = (gv(&a), gv(&b));
            let dist = (a.as_vector() - b.as_vector()).norm();
            let pa = project_feasible(&a, r);
            let pb = project_feasible(&b, r);
            prop_assert!((project_feasible(&pa, r).as_vector() - pa.as_vector()).amax() <= 1e-12);
            prop_assert!((pa.as_vector() - pb.as_vector()).norm() <= dist + 1e-12);
            let ba = proj_group_l2_ball(&a);
            let bb = proj_group_l2_ball(&b);
            prop_assert!((proj_group_l2_ball(&ba).as_vector() - ba.as_vector()).amax() <= 1e-12);
            prop_assert!((ba.as_vector() - bb.as_vector()).norm() <= dist + 1e-12);
            let la = proj_linf_ball(a.as_vector());
            let lb = proj_linf_ball(b.as_vector());
            prop_assert!((proj_linf_ball(&la) - &la).amax() <= 1e-12);
            prop_assert!((la - lb).norm() <= dist + 1e-12);
            let mut xa = a.as_vector().clone();
            let mut xb = b.as_vector().clone();
            project_boxed_in_place(&mut xa, r, 2.0);
            project_boxed_in_place(&mut xb, r, 2.0);
            prop_assert!((xa - xb).norm() <= dist + 1e-12);
        }

        #[test]
        fn projection_output_is_feasible(v in proptest::collection::vec(-5.0f64..5.0, 10), r in 0.05f64..2.0) {
            let out = project_feasible(&gv(&v), r);
            let c = crate::array::ConstraintMatrix::new(5, r);
            prop_assert!(c.is_feasible(out.as_vector(), 1e-12));
        }
    }
}
