//! TOML experiment configuration.
//!
//! Every section is optional; missing keys take the desk defaults
//! (8 sensors, 360-point 0.5° grid, two sources at 13.2220° / 28.6022°,
//! 100 snapshots, 20 trials).

use std::path::{Path, PathBuf};

use offgrid_core::{
    build_dictionary, AngularGrid, ArrayGeometry, AspgConfig, BColumn, CadmmConfig, Dictionary, EgtConfig,
    SdcoConfig, SolverKind,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("[{section}] {source}")]
    Solver { section: &'static str, source: offgrid_core::SolverError },
}

/// A method in the `solvers` list: one of the solvers or the MUSIC baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Music,
    Solver(SolverKind),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Music => "music",
            Method::Solver(k) => k.name(),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "music" {
            Ok(Method::Music)
        } else {
            s.parse().map(Method::Solver)
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub thetas: Vec<f64>,
    pub snapshots: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self { thetas: vec![13.2220, 28.6022], snapshots: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub sensors: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { sensors: 8, spacing: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub start: f64,
    pub spacing: f64,
    pub count: usize,
    pub b_column: BColumn,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { start: -90.0, spacing: 0.5, count: 360, b_column: BColumn::Printed }
    }
}

/// Which runs get a trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceOutput {
    None,
    /// Trial 0 of every SNR.
    #[default]
    First,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// Trial count under `--full`.
    pub full_trials: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub solvers: Vec<Method>,
    /// `c` in `η = c·σ̂_n·√(ln N)/√T`.
    pub eta_scale: f64,
    /// Fixed `η` for every run; overrides `eta_scale`.
    pub eta: Option<f64>,
    pub traces: TraceOutput,
    pub spectra: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            snr_db: vec![-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0],
            trials: 20,
            full_trials: 100,
            base_seed: 0,
            output_dir: PathBuf::from("results"),
            solvers: vec![
                Method::Music,
                Method::Solver(SolverKind::Cadmm),
                Method::Solver(SolverKind::AspgL1),
                Method::Solver(SolverKind::AspgL2),
                Method::Solver(SolverKind::Egt),
                Method::Solver(SolverKind::Sdco),
                Method::Solver(SolverKind::SdcoCt),
            ],
            eta_scale: 1.0,
            eta: None,
            traces: TraceOutput::First,
            spectra: true,
        }
    }
}

/// Solver sections. Any `eta` given here is replaced by the experiment's `η`;
/// the ASPG variant follows the solver name and `rounds` is forced to 1 for
/// plain `sdco`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub geometry: GeometrySection,
    pub grid: GridSection,
    pub experiment: ExperimentSection,
    pub cadmm: CadmmConfig,
    pub aspg: AspgConfig,
    pub egt: EgtConfig,
    pub sdco: SdcoConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), source: Box::new(e) })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse { path: "<string>".into(), source: Box::new(e) })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let k = self.scenario.thetas.len();
        if k == 0 {
            return bad("scenario.thetas is empty".into());
        }
        if k >= self.geometry.sensors {
            return bad(format!("{k} sources need more than {} sensors", self.geometry.sensors));
        }
        if self.scenario.snapshots == 0 {
            return bad("scenario.snapshots must be positive".into());
        }
        if self.experiment.trials == 0 || self.experiment.full_trials == 0 {
            return bad("trial counts must be positive".into());
        }
        if self.experiment.snr_db.is_empty() || self.experiment.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("experiment.snr_db must be a non-empty list of finite values".into());
        }
        if self.experiment.solvers.is_empty() {
            return bad("experiment.solvers is empty".into());
        }
        if !(self.experiment.eta_scale > 0.0) {
            return bad("experiment.eta_scale must be positive".into());
        }
        if let Some(eta) = self.experiment.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad("experiment.eta must be positive".into());
            }
        }
        self.geometry().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grid().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let solver = |section| move |source| ConfigError::Solver { section, source };
        self.cadmm.validate().map_err(solver("cadmm"))?;
        self.aspg.validate().map_err(solver("aspg"))?;
        self.egt.validate().map_err(solver("egt"))?;
        self.sdco.validate().map_err(solver("sdco"))?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry, offgrid_core::ModelError> {
        ArrayGeometry::ula(self.geometry.sensors, self.geometry.spacing)
    }

    pub fn grid(&self) -> Result<AngularGrid, offgrid_core::ModelError> {
        AngularGrid::uniform(self.grid.start, self.grid.spacing, self.grid.count)
    }

    pub fn dictionary(&self) -> Result<Dictionary, ConfigError> {
        let geo = self.geometry().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let grid = self.grid().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(build_dictionary(&geo, &grid, self.grid.b_column))
    }

    pub fn trials(&self, full: bool) -> usize {
        if full {
            self.experiment.full_trials
        } else {
            self.experiment.trials
        }
    }
}
