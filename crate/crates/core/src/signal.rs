//! Snapshot simulation, sample covariance and measurement assembly.

use std::io::{self, Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{steering_vector, vectorize_covariance, ArrayGeometry};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("empty snapshot set")]
    NoSnapshots,
    #[error("covariance is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("covariance must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
}

/// Far-field narrowband sources observed by the array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Source directions in degrees.
    pub true_thetas: Vec<f64>,
    /// Per-source powers `σ_k²`.
    pub source_variances: Vec<f64>,
    pub noise_variance: f64,
    pub snapshots: usize,
    pub seed: u64,
}

impl Scenario {
    /// Equal-power sources at a per-source SNR in dB, unit noise power.
    pub fn with_snr(thetas: &[f64], snr_db: f64, snapshots: usize, seed: u64) -> Self {
        let power = 10f64.powf(snr_db / 10.0);
        Self {
            true_thetas: thetas.to_vec(),
            source_variances: vec![power; thetas.len()],
            noise_variance: 1.0,
            snapshots,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if self.true_thetas.is_empty() {
            return Err(SignalError::InvalidScenario("no sources"));
        }
        if self.true_thetas.len() != self.source_variances.len() {
            return Err(SignalError::InvalidScenario("one variance per source"));
        }
        if self.source_variances.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(SignalError::InvalidScenario("source variances must be >= 0"));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(SignalError::InvalidScenario("noise variance must be >= 0"));
        }
        if self.snapshots == 0 {
            return Err(SignalError::InvalidScenario("at least one snapshot"));
        }
        Ok(())
    }

    /// `Σ σ_k² a(θ_k) a(θ_k)ᴴ + σ_n² I`.
    pub fn exact_covariance(&self, geometry: &ArrayGeometry) -> DMatrix<C64> {
        let m = geometry.sensors();
        let mut r = DMatrix::<C64>::identity(m, m) * C64::from(self.noise_variance);
        for (&theta, &var) in self.true_thetas.iter().zip(&self.source_variances) {
            let a = steering_vector(geometry, theta);
            r += (&a * a.adjoint()) * C64::from(var);
        }
        r
    }
}

fn circular(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(scale * re, scale * im)
}

/// Draws `T` snapshots `v(t) = Σ s_k(t) a(θ_k) + n(t)` as the columns of an
/// `M × T` matrix. Sources and noise are i.i.d. circular complex Gaussian.
pub fn simulate_snapshots(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
) -> Result<DMatrix<C64>, SignalError> {
    scenario.validate()?;
    let m = geometry.sensors();
    let steering: Vec<DVector<C64>> = scenario
        .true_thetas
        .iter()
        .map(|&t| steering_vector(geometry, t))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut v = DMatrix::<C64>::zeros(m, scenario.snapshots);
    for t in 0..scenario.snapshots {
        let mut col = DVector::<C64>::zeros(m);
        for (a, &var) in steering.iter().zip(&scenario.source_variances) {
            let s = circular(&mut rng, var);
            col.axpy(s, a, C64::from(1.0));
        }
        for i in 0..m {
            col[i] += circular(&mut rng, scenario.noise_variance);
        }
        v.set_column(t, &col);
    }
    Ok(v)
}

/// `(1/T) Σ_t v(t) v(t)ᴴ`.
pub fn sample_covariance(snapshots: &DMatrix<C64>) -> Result<DMatrix<C64>, SignalError> {
    let t = snapshots.ncols();
    if t == 0 {
        return Err(SignalError::NoSnapshots);
    }
    let mut r = snapshots * snapshots.adjoint() / C64::from(t as f64);
    // Exact Hermitian symmetry.
    let m = r.nrows();
    for i in 0..m {
        r[(i, i)].im = 0.0;
        for j in 0..i {
            r[(j, i)] = r[(i, j)].conj();
        }
    }
    Ok(r)
}

/// Vectorized covariance with the noise floor removed.
#[derive(Debug, Clone)]
pub struct Measurement {
    /// `vec(R̂) − σ̂_n² vec(I)`.
    pub y: DVector<C64>,
    /// Smallest eigenvalue of `R̂`, clamped at zero.
    pub noise_floor: f64,
    pub sample_cov: DMatrix<C64>,
    /// Number of snapshots behind `sample_cov`, when known.
    pub snapshot_count: Option<usize>,
}

impl Measurement {
    /// Simulates, estimates the covariance and assembles in one go.
    pub fn simulate(scenario: &Scenario, geometry: &ArrayGeometry) -> Result<Self, SignalError> {
        let v = simulate_snapshots(scenario, geometry)?;
        let r = sample_covariance(&v)?;
        let mut meas = assemble_measurement(&r)?;
        meas.snapshot_count = Some(scenario.snapshots);
        Ok(meas)
    }

    /// Measurement of the exact model covariance of `scenario`.
    pub fn exact(scenario: &Scenario, geometry: &ArrayGeometry) -> Result<Self, SignalError> {
        scenario.validate()?;
        assemble_measurement(&scenario.exact_covariance(geometry))
    }

    /// `[Re y; Im y]`.
    pub fn y_real(&self) -> DVector<f64> {
        crate::array::Dictionary::embed(&self.y)
    }

    /// `trace(R̂)`, the total received power.
    pub fn total_power(&self) -> f64 {
        self.sample_cov.trace().re
    }
}

fn hermitian_deviation(r: &DMatrix<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            dev = dev.max((r[(i, j)] - r[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Removes the smallest-eigenvalue noise floor and vectorizes.
pub fn assemble_measurement(r: &DMatrix<C64>) -> Result<Measurement, SignalError> {
    if r.nrows() != r.ncols() {
        return Err(SignalError::NotSquare {
            rows: r.nrows(),
            cols: r.ncols(),
        });
    }
    let scale = r.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
    let dev = hermitian_deviation(r);
    if dev > 1e-10 * scale {
        return Err(SignalError::NotHermitian(dev));
    }
    let eig = SymmetricEigen::new(r.clone());
    let floor = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let m = r.nrows();
    let shifted = r - DMatrix::<C64>::identity(m, m) * C64::from(floor);
    let y = vectorize_covariance(&shifted).expect("square checked above");
    Ok(Measurement {
        y,
        noise_floor: floor,
        sample_cov: r.clone(),
        snapshot_count: None,
    })
}

/// Writes snapshots column-major as interleaved little-endian `f64` re/im pairs.
pub fn write_snapshots<W: Write>(mut out: W, v: &DMatrix<C64>) -> io::Result<()> {
    for z in v.iter() {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

/// Inverse of [`write_snapshots`] for a known number of sensors.
pub fn read_snapshots<R: Read>(mut input: R, sensors: usize) -> io::Result<DMatrix<C64>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if sensors == 0 || bytes.len() % (16 * sensors) != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated snapshot file"));
    }
    let vals: Vec<C64> = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    Ok(DMatrix::from_vec(sensors, vals.len() / sensors, vals))
}
