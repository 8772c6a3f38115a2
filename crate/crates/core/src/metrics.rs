//! MUSIC baseline, DoA extraction from solver outputs and error metrics.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{steering_vector, AngularGrid, ArrayGeometry};
use crate::prox::GroupedVector;
use crate::C64;

/// Peaks closer than this many bins are treated as one lobe.
pub const MIN_SEPARATION: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least one source")]
    NoSources,
    #[error("MUSIC needs K < M (K = {k}, M = {m})")]
    TooManySources { k: usize, m: usize },
    #[error("source count mismatch: {got} estimates vs {want} truths")]
    CountMismatch { got: usize, want: usize },
    #[error("covariance is {0}x{1}, expected square of the array size")]
    BadCovariance(usize, usize),
    #[error("grid has {grid} atoms but the estimate has {groups} groups")]
    GridMismatch { grid: usize, groups: usize },
    #[error("no estimates to score")]
    Empty,
}

/// `K` estimated sources. `thetas[k] = grid[grid_indices[k]] + betas[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoAEstimate {
    pub thetas: Vec<f64>,
    pub betas: Vec<f64>,
    pub powers: Vec<f64>,
    pub grid_indices: Vec<usize>,
    /// Set when fewer than `K` peaks were found and picks were padded with
    /// the largest remaining atoms.
    pub padded: bool,
}

/// Indices of the `k` strongest local maxima of `values`, at least
/// [`MIN_SEPARATION`] bins apart, strongest first. Returns fewer than `k` if
/// the sequence has fewer peaks.
fn pick_peaks(values: &[f64], k: usize) -> Vec<usize> {
    let n = values.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            values[i] > 0.0
                && (i == 0 || values[i] >= values[i - 1])
                && (i + 1 == n || values[i] >= values[i + 1])
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    for i in peaks {
        if picked.len() == k {
            break;
        }
        if picked.iter().all(|&j| i.abs_diff(j) >= MIN_SEPARATION) {
            picked.push(i);
        }
    }
    picked
}

fn pad_picks(values: &[f64], picked: &mut Vec<usize>, k: usize) -> bool {
    if picked.len() >= k {
        return false;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    for i in order {
        if picked.len() == k {
            break;
        }
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    true
}

/// MUSIC pseudospectrum `1/‖E_nᴴ a(φ)‖²` over the grid and its `K` largest
/// peaks (on-grid, `β = 0`).
pub fn music_spectrum(
    sample_cov: &DMatrix<C64>,
    geometry: &ArrayGeometry,
    grid: &AngularGrid,
    k: usize,
) -> Result<(Vec<f64>, DoAEstimate), MetricsError> {
    let m = geometry.sensors();
    if k == 0 {
        return Err(MetricsError::NoSources);
    }
    if k >= m {
        return Err(MetricsError::TooManySources { k, m });
    }
    if sample_cov.nrows() != m || sample_cov.ncols() != m {
        return Err(MetricsError::BadCovariance(sample_cov.nrows(), sample_cov.ncols()));
    }
    let eig = SymmetricEigen::new(sample_cov.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let noise: Vec<usize> = order[..m - k].to_vec();

    let spectrum: Vec<f64> = grid
        .angles()
        .iter()
        .map(|&phi| {
            let a = steering_vector(geometry, phi);
            let proj: f64 = noise
                .iter()
                .map(|&j| eig.eigenvectors.column(j).dotc(&a).norm_sqr())
                .sum();
            1.0 / proj.max(f64::MIN_POSITIVE)
        })
        .collect();

    let mut picked = pick_peaks(&spectrum, k);
    let padded = pad_picks(&spectrum, &mut picked, k);
    let thetas = picked.iter().map(|&i| grid.angles()[i]).collect();
    let powers = picked.iter().map(|&i| spectrum[i]).collect();
    let est = DoAEstimate { thetas, betas: vec![0.0; k], powers, grid_indices: picked, padded };
    Ok((spectrum, est))
}

/// Extracts `K` sources from a solver output.
///
/// Peaks are the `K` strongest local maxima of the group norms. An off-grid
/// source is usually shared between its two neighbouring atoms, so each peak
/// is refined with the power-weighted mean of `φ_j + clamp(p_j/s_j, ±r)` over
/// the peak and its immediate neighbours (atoms with `s_j ≤ 1e-8·max s` are
/// ignored). The reported atom is the one nearest to the refined angle, so
/// `|β| ≤ r` holds; the reported power is the neighbourhood's total `s`.
pub fn recover_doas(x_hat: &GroupedVector, grid: &AngularGrid, k: usize) -> Result<DoAEstimate, MetricsError> {
    if k == 0 {
        return Err(MetricsError::NoSources);
    }
    let n = x_hat.groups();
    if n != grid.len() {
        return Err(MetricsError::GridMismatch { grid: grid.len(), groups: n });
    }
    let norms = x_hat.group_norms();
    let mut picked = pick_peaks(&norms, k);
    let padded = pad_picks(&norms, &mut picked, k);

    let s = x_hat.s();
    let p = x_hat.p();
    let r = grid.r();
    let phi = grid.angles();
    let s_floor = 1e-8 * s.iter().copied().fold(0.0, f64::max);
    let mut est = DoAEstimate {
        thetas: Vec::with_capacity(k),
        betas: Vec::with_capacity(k),
        powers: Vec::with_capacity(k),
        grid_indices: Vec::with_capacity(k),
        padded,
    };
    for &i in &picked {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n - 1);
        let (mut weight, mut moment) = (0.0, 0.0);
        for j in lo..=hi {
            if j != i && picked.contains(&j) {
                continue;
            }
            if s[j] > s_floor && s[j] > 0.0 {
                let beta = (p[j] / s[j]).clamp(-r, r);
                weight += s[j];
                moment += s[j] * (phi[j] + beta);
            }
        }
        let (index, theta) = if weight > 0.0 {
            let theta = moment / weight;
            let index = if (theta - phi[i]).abs() <= r { i } else { grid.nearest(theta) };
            (index, theta)
        } else {
            (i, phi[i])
        };
        let beta = (theta - phi[index]).clamp(-r, r);
        est.grid_indices.push(index);
        est.betas.push(beta);
        est.thetas.push(phi[index] + beta);
        est.powers.push(weight);
    }
    Ok(est)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sqrt(mean over trials of (1/K)‖θ̂ − θ‖²)` with ascending-angle pairing.
pub fn rmse(estimates: &[DoAEstimate], truth: &[f64]) -> Result<f64, MetricsError> {
    let thetas: Vec<&[f64]> = estimates.iter().map(|e| e.thetas.as_slice()).collect();
    rmse_angles(&thetas, truth)
}

/// [`rmse`] on bare angle lists.
pub fn rmse_angles(estimates: &[&[f64]], truth: &[f64]) -> Result<f64, MetricsError> {
    if estimates.is_empty() {
        return Err(MetricsError::Empty);
    }
    let t = sorted(truth);
    let mut acc = 0.0;
    for est in estimates {
        if est.len() != t.len() {
            return Err(MetricsError::CountMismatch { got: est.len(), want: t.len() });
        }
        let e = sorted(est);
        acc += e.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.len() as f64;
    }
    Ok((acc / estimates.len() as f64).sqrt())
}

/// `‖θ̂ − θ‖₂ / ‖θ‖₂` for one trial, ascending-angle pairing.
pub fn reconstruction_error(theta_hat: &[f64], theta: &[f64]) -> Result<f64, MetricsError> {
    if theta_hat.len() != theta.len() {
        return Err(MetricsError::CountMismatch { got: theta_hat.len(), want: theta.len() });
    }
    if theta.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (e, t) = (sorted(theta_hat), sorted(theta));
    let num: f64 = e.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(num / den)
}
