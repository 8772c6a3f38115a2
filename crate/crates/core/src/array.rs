//! Array geometry, angular grid and the off-grid dictionary `G = [A, B]`.
//!
//! Angles are in degrees everywhere. The off-grid columns of `B` are
//! derivatives per degree, so that the ratio `p_i / s_i` of a recovered
//! group is directly an angular offset in degrees.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("array needs at least two sensors, got {0}")]
    TooFewSensors(usize),
    #[error("sensor positions must be strictly increasing")]
    UnsortedPositions,
    #[error("grid needs at least two atoms, got {0}")]
    TooFewAtoms(usize),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("angle must be finite")]
    NonFiniteAngle,
}

/// Sensor positions of a linear array in units of wavelength (`d_m / λ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    positions: Vec<f64>,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<f64>) -> Result<Self, ModelError> {
        if positions.len() < 2 {
            return Err(ModelError::TooFewSensors(positions.len()));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ModelError::UnsortedPositions);
        }
        Ok(Self { positions })
    }

    /// Uniform linear array with `m` sensors, first sensor at the origin.
    pub fn ula(m: usize, spacing: f64) -> Result<Self, ModelError> {
        Self::new((0..m).map(|i| i as f64 * spacing).collect())
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(m: usize) -> Result<Self, ModelError> {
        Self::ula(m, 0.5)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn sensors(&self) -> usize {
        self.positions.len()
    }
}

/// Uniform grid of candidate directions in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    phi: Vec<f64>,
    spacing: f64,
}

impl AngularGrid {
    pub fn uniform(start: f64, spacing: f64, count: usize) -> Result<Self, ModelError> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(ModelError::BadSpacing(spacing));
        }
        if count < 2 {
            return Err(ModelError::TooFewAtoms(count));
        }
        let phi = (0..count).map(|i| start + i as f64 * spacing).collect();
        Ok(Self { phi, spacing })
    }

    /// `[-90°, 90°)` at 0.5°, i.e. 360 atoms with `r = 0.25°`.
    pub fn desk() -> Self {
        Self::uniform(-90.0, 0.5, 360).expect("static grid is valid")
    }

    pub fn angles(&self) -> &[f64] {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Maximum off-grid offset, half the grid spacing.
    pub fn r(&self) -> f64 {
        self.spacing / 2.0
    }

    /// Index of the grid atom closest to `theta`.
    pub fn nearest(&self, theta: f64) -> usize {
        let raw = ((theta - self.phi[0]) / self.spacing).round();
        raw.clamp(0.0, (self.phi.len() - 1) as f64) as usize
    }
}

/// How the off-grid columns of `B` are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BColumn {
    /// `∂a/∂φ ⊗ ∂a/∂φ`.
    #[default]
    Printed,
    /// `conj(∂a/∂φ) ⊗ a + conj(a) ⊗ ∂a/∂φ`, the exact derivative of `conj(a) ⊗ a`.
    ProductRule,
}

/// Steering vector with entries `exp(-j 2π (d_m/λ) sin θ)`, θ in degrees.
pub fn steering_vector(geometry: &ArrayGeometry, theta: f64) -> DVector<C64> {
    let sin = theta.to_radians().sin();
    DVector::from_iterator(
        geometry.sensors(),
        geometry
            .positions()
            .iter()
            .map(|&d| C64::from_polar(1.0, -2.0 * PI * d * sin)),
    )
}

/// Derivative of the steering vector with respect to θ in degrees.
pub fn steering_derivative(geometry: &ArrayGeometry, theta: f64) -> DVector<C64> {
    let (sin, cos) = theta.to_radians().sin_cos();
    let per_degree = PI / 180.0;
    DVector::from_iterator(
        geometry.sensors(),
        geometry.positions().iter().map(|&d| {
            let a = C64::from_polar(1.0, -2.0 * PI * d * sin);
            a * C64::new(0.0, -2.0 * PI * d * cos * per_degree)
        }),
    )
}

/// Kronecker product of two vectors, `(u ⊗ v)[j·len(v) + i] = u_j v_i`.
pub fn kron(u: &DVector<C64>, v: &DVector<C64>) -> DVector<C64> {
    let n = v.len();
    DVector::from_fn(u.len() * n, |k, _| u[k / n] * v[k % n])
}

/// The off-grid dictionary together with its real embedding.
///
/// The decision variable is real, so the solvers work with the stacked real
/// operator `H = [Re G; Im G]` which satisfies `‖y − Gx‖ = ‖ỹ − Hx‖` for
/// `ỹ = [Re y; Im y]` and real `x`.
#[derive(Debug, Clone)]
pub struct Dictionary {
    a: DMatrix<C64>,
    b: DMatrix<C64>,
    g: DMatrix<C64>,
    real: DMatrix<f64>,
    grid: AngularGrid,
    geometry: ArrayGeometry,
    b_column: BColumn,
}

impl Dictionary {
    pub fn a(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<C64> {
        &self.b
    }

    pub fn g(&self) -> &DMatrix<C64> {
        &self.g
    }

    /// Real embedding `H = [Re G; Im G]` of size `2M² × 2N`.
    pub fn real(&self) -> &DMatrix<f64> {
        &self.real
    }

    pub fn grid(&self) -> &AngularGrid {
        &self.grid
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn b_column(&self) -> BColumn {
        self.b_column
    }

    /// Number of groups `N`.
    pub fn groups(&self) -> usize {
        self.grid.len()
    }

    /// Number of complex measurement rows `M²`.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// `[Re y; Im y]`.
    pub fn embed(y: &DVector<C64>) -> DVector<f64> {
        let m = y.len();
        DVector::from_fn(2 * m, |i, _| if i < m { y[i].re } else { y[i - m].im })
    }

    /// `G x` for a real `x`, returned as a complex vector.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<C64> {
        let hx = &self.real * x;
        let m = self.rows();
        DVector::from_fn(m, |i, _| C64::new(hx[i], hx[i + m]))
    }
}

/// Builds `A`, `B` and `G = [A, B]` for the given array and grid.
pub fn build_dictionary(
    geometry: &ArrayGeometry,
    grid: &AngularGrid,
    b_column: BColumn,
) -> Dictionary {
    let m = geometry.sensors();
    let n = grid.len();
    let mut a = DMatrix::<C64>::zeros(m * m, n);
    let mut b = DMatrix::<C64>::zeros(m * m, n);
    for (i, &phi) in grid.angles().iter().enumerate() {
        let sv = steering_vector(geometry, phi);
        let dsv = steering_derivative(geometry, phi);
        let conj = sv.conjugate();
        a.set_column(i, &kron(&conj, &sv));
        let col = match b_column {
            BColumn::Printed => kron(&dsv, &dsv),
            BColumn::ProductRule => kron(&dsv.conjugate(), &sv) + kron(&conj, &dsv),
        };
        b.set_column(i, &col);
    }
    let mut g = DMatrix::<C64>::zeros(m * m, 2 * n);
    g.columns_mut(0, n).copy_from(&a);
    g.columns_mut(n, n).copy_from(&b);
    let rows = m * m;
    let real = DMatrix::from_fn(2 * rows, 2 * n, |i, j| {
        if i < rows {
            g[(i, j)].re
        } else {
            g[(i - rows, j)].im
        }
    });
    Dictionary {
        a,
        b,
        g,
        real,
        grid: grid.clone(),
        geometry: geometry.clone(),
        b_column,
    }
}

/// Column-major `vec(R)`: entry `i + M j` is `R[i, j]`.
pub fn vectorize_covariance(r: &DMatrix<C64>) -> Result<DVector<C64>, ModelError> {
    if r.nrows() != r.ncols() {
        return Err(ModelError::NotSquare {
            rows: r.nrows(),
            cols: r.ncols(),
        });
    }
    // nalgebra storage is already column-major.
    Ok(DVector::from_column_slice(r.as_slice()))
}

/// Sparse `3N × 2N` matrix with `C x ≤ 0` iff `s ≥ 0` and `|p| ≤ r s`.
///
/// Rows `0..N` hold `-s_i`, rows `N..2N` hold `p_i - r s_i` and rows
/// `2N..3N` hold `-p_i - r s_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    n: usize,
    r: f64,
}

pub fn constraint_matrix(grid: &AngularGrid) -> ConstraintMatrix {
    ConstraintMatrix::new(grid.len(), grid.r())
}

impl ConstraintMatrix {
    pub fn new(groups: usize, r: f64) -> Self {
        Self { n: groups, r }
    }

    pub fn groups(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn nrows(&self) -> usize {
        3 * self.n
    }

    pub fn ncols(&self) -> usize {
        2 * self.n
    }

    /// Nonzeros of row `k` as `(column, value)` pairs.
    pub fn row(&self, k: usize) -> Vec<(usize, f64)> {
        let n = self.n;
        match k / n {
            0 => vec![(k, -1.0)],
            1 => vec![(k - n, -self.r), (k, 1.0)],
            _ => vec![(k - 2 * n, -self.r), (k - n, -1.0)],
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(3 * n);
        for i in 0..n {
            let (s, p) = (x[i], x[i + n]);
            out[i] = -s;
            out[i + n] = p - self.r * s;
            out[i + 2 * n] = -p - self.r * s;
        }
        out
    }

    /// `Cᵀ w`.
    pub fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            let (w0, w1, w2) = (w[i], w[i + n], w[i + 2 * n]);
            out[i] = -w0 - self.r * (w1 + w2);
            out[i + n] = w1 - w2;
        }
        out
    }

    /// Dense copy, mainly for tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.nrows(), self.ncols());
        for k in 0..self.nrows() {
            for (j, v) in self.row(k) {
                c[(k, j)] = v;
            }
        }
        c
    }

    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.apply(x).iter().all(|&v| v <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        let g = ArrayGeometry::half_wavelength(8).unwrap();
        let a = steering_vector(&g, 0.0);
        assert!(a.iter().all(|&v| close(v, C64::new(1.0, 0.0), 1e-15)));
    }

    #[test]
    fn steering_endfire_two_sensors() {
        let g = ArrayGeometry::half_wavelength(2).unwrap();
        let a = steering_vector(&g, 90.0);
        assert!(close(a[0], C64::new(1.0, 0.0), 1e-15));
        assert!(close(a[1], C64::new(-1.0, 0.0), 1e-15));
    }

    #[test]
    fn steering_matches_scalar_formula() {
        let g = ArrayGeometry::half_wavelength(8).unwrap();
        let theta: f64 = 13.2220;
        let a = steering_vector(&g, theta);
        for m in 0..8 {
            let phase = -2.0 * PI * (m as f64 * 0.5) * (theta * PI / 180.0).sin();
            let expect = C64::new(phase.cos(), phase.sin());
            assert!(close(a[m], expect, 1e-14));
            assert_relative_eq!(a[m].norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_mirror_is_conjugate() {
        let g = ArrayGeometry::half_wavelength(6).unwrap();
        let a = steering_vector(&g, 21.7);
        let b = steering_vector(&g, -21.7);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(close(*x, y.conj(), 1e-15));
        }
    }

    #[test]
    fn invalid_geometry_and_grid() {
        assert_eq!(ArrayGeometry::new(vec![0.0]), Err(ModelError::TooFewSensors(1)));
        assert_eq!(
            ArrayGeometry::new(vec![0.0, 0.5, 0.5]),
            Err(ModelError::UnsortedPositions)
        );
        assert_eq!(AngularGrid::uniform(0.0, 0.0, 4), Err(ModelError::BadSpacing(0.0)));
        assert_eq!(AngularGrid::uniform(0.0, 1.0, 1), Err(ModelError::TooFewAtoms(1)));
    }

    #[test]
    fn desk_grid_shape() {
        let grid = AngularGrid::desk();
        assert_eq!(grid.len(), 360);
        assert_eq!(grid.r(), 0.25);
        assert_eq!(grid.angles()[0], -90.0);
        assert_eq!(grid.angles()[359], 89.5);
        assert_eq!(grid.angles()[grid.nearest(13.2220)], 13.0);
        assert_eq!(grid.angles()[grid.nearest(28.6022)], 28.5);
    }

    #[test]
    fn a_column_at_broadside_is_all_ones() {
        let geo = ArrayGeometry::half_wavelength(8).unwrap();
        let grid = AngularGrid::uniform(-1.0, 0.5, 5).unwrap();
        let d = build_dictionary(&geo, &grid, BColumn::Printed);
        assert_eq!(d.a().nrows(), 64);
        let col = d.a().column(2);
        assert!(col.iter().all(|&v| close(v, C64::new(1.0, 0.0), 1e-14)));
    }

    #[test]
    fn b_column_at_broadside_is_derivative_kron() {
        let geo = ArrayGeometry::half_wavelength(8).unwrap();
        let grid = AngularGrid::uniform(-1.0, 0.5, 5).unwrap();
        let d = build_dictionary(&geo, &grid, BColumn::Printed);
        // At φ = 0 the derivative per degree is k_m = -j 2π d_m (π/180).
        let k: Vec<C64> = (0..8)
            .map(|m| C64::new(0.0, -2.0 * PI * (m as f64 * 0.5) * PI / 180.0))
            .collect();
        for j in 0..8 {
            for i in 0..8 {
                assert!(close(d.b()[(j * 8 + i, 2)], k[j] * k[i], 1e-15));
            }
        }
    }

    #[test]
    fn a_matches_elementwise_kronecker() {
        let geo = ArrayGeometry::half_wavelength(2).unwrap();
        let grid = AngularGrid::uniform(-10.0, 10.0, 3).unwrap();
        let d = build_dictionary(&geo, &grid, BColumn::Printed);
        for (c, &phi) in grid.angles().iter().enumerate() {
            let s = (phi * PI / 180.0).sin();
            let a = [C64::new(1.0, 0.0), C64::from_polar(1.0, -PI * s)];
            // vec(a aᴴ)[i + 2j] = a_i conj(a_j)
            for j in 0..2 {
                for i in 0..2 {
                    assert!(close(d.a()[(i + 2 * j, c)], a[i] * a[j].conj(), 1e-15));
                }
            }
        }
        assert_eq!(d.g().ncols(), 6);
        for c in 0..3 {
            assert_eq!(d.g().column(c), d.a().column(c));
            assert_eq!(d.g().column(c + 3), d.b().column(c));
        }
    }

    #[test]
    fn product_rule_column_matches_finite_difference() {
        let geo = ArrayGeometry::half_wavelength(4).unwrap();
        let grid = AngularGrid::uniform(20.0, 0.5, 2).unwrap();
        let d = build_dictionary(&geo, &grid, BColumn::ProductRule);
        let h = 1e-5;
        let outer = |t: f64| {
            let a = steering_vector(&geo, t);
            kron(&a.conjugate(), &a)
        };
        let fd = (outer(20.0 + h) - outer(20.0 - h)) / C64::new(2.0 * h, 0.0);
        for i in 0..16 {
            assert!(close(d.b()[(i, 0)], fd[i], 1e-8));
        }
    }

    #[test]
    fn vectorize_identity_and_rank_one() {
        let r = DMatrix::<C64>::identity(2, 2);
        let v = vectorize_covariance(&r).unwrap();
        let expect = [1.0, 0.0, 0.0, 1.0];
        for (x, e) in v.iter().zip(expect) {
            assert!(close(*x, C64::new(e, 0.0), 0.0));
        }
        let geo = ArrayGeometry::half_wavelength(2).unwrap();
        let a = steering_vector(&geo, 0.0);
        let r = (&a * a.adjoint()) * C64::new(2.0, 0.0);
        let v = vectorize_covariance(&r).unwrap();
        assert!(v.iter().all(|&x| close(x, C64::new(2.0, 0.0), 1e-15)));
    }

    #[test]
    fn vectorize_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = DMatrix::<C64>::zeros(3, 3);
        for i in 0..3 {
            for j in i..3 {
                let v = C64::new(rng.random::<f64>(), if i == j { 0.0 } else { rng.random() });
                r[(i, j)] = v;
                r[(j, i)] = v.conj();
            }
        }
        let v = vectorize_covariance(&r).unwrap();
        for j in 0..3 {
            for i in 0..3 {
                assert_eq!(v[i + 3 * j], r[(i, j)]);
            }
        }
        assert!(vectorize_covariance(&DMatrix::<C64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn on_grid_covariance_equals_a_column() {
        let geo = ArrayGeometry::half_wavelength(8).unwrap();
        let grid = AngularGrid::desk();
        let d = build_dictionary(&geo, &grid, BColumn::Printed);
        for &i in &[0usize, 91, 206, 359] {
            let a = steering_vector(&geo, grid.angles()[i]);
            let r = (&a * a.adjoint()) * C64::new(1.7, 0.0);
            let v = vectorize_covariance(&r).unwrap();
            for k in 0..64 {
                assert!(close(v[k], d.a()[(k, i)] * C64::new(1.7, 0.0), 1e-13));
            }
        }
    }

    #[test]
    fn constraint_examples() {
        let c = ConstraintMatrix::new(1, 0.25);
        let cx = c.apply(&DVector::from_vec(vec![1.0, 0.1]));
        assert_relative_eq!(cx[0], -1.0);
        assert_relative_eq!(cx[1], -0.15);
        assert_relative_eq!(cx[2], -0.35);
        let cx = c.apply(&DVector::from_vec(vec![1.0, 0.5]));
        assert_relative_eq!(cx[1], 0.25);
        assert!(!c.is_feasible(&DVector::from_vec(vec![1.0, 0.5]), 0.0));
    }

    #[test]
    fn constraint_membership_matches_direct_test() {
        let grid = AngularGrid::desk();
        let c = constraint_matrix(&grid);
        let dense = c.to_dense();
        assert!((0..c.nrows()).all(|k| c.row(k).len() <= 2));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = grid.len();
        for _ in 0..10_000 {
            // Feasible draw, then break one group half of the time.
            let mut x = DVector::zeros(2 * n);
            for i in 0..n {
                let s: f64 = rng.random_range(0.0..1.0);
                x[i] = s;
                x[i + n] = rng.random_range(-1.0..=1.0) * 0.25 * s;
            }
            if rng.random_bool(0.5) {
                let i = rng.random_range(0..n);
                if rng.random_bool(0.5) {
                    x[i] = -rng.random_range(1e-6..1.0);
                } else {
                    x[i + n] = (0.25 * x[i] + rng.random_range(1e-6..1.0)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                }
            }
            let direct = (0..n).all(|i| x[i] >= 0.0 && x[i + n].abs() <= 0.25 * x[i]);
            assert_eq!(c.is_feasible(&x, 0.0), direct);
            let diff = (&dense * &x - c.apply(&x)).amax();
            assert!(diff < 1e-15);
        }
        let w = DVector::from_fn(3 * n, |i, _| i as f64 * 0.01);
        let diff = (dense.transpose() * &w - c.apply_transpose(&w)).amax();
        assert!(diff < 1e-12);
    }
}
