use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capacity::TableSpec;
use crate::error::{Error, Result};
use crate::geometry::{Domain, GeneratorKind};
use crate::homogenization::StudyConfig;
use crate::stochastic::{RadiusLaw, RandomDeloneKind, RandomStudyConfig};

/// Experiment file: global keys plus one table per subcommand.
///
/// ```toml
/// seed = 7
/// threads = 4
/// output_dir = "runs/cap"
///
/// [tolerances]
/// cg_tol = 1e-10
///
/// [capacity]
/// t = { shape = "ball", radius = 1.0, center = [0.0, 0.0] }
/// r_list = [2.0, 4.0, 8.0]
/// r_ratio = 2.0
/// kernel = { n = 2, s = 0.55, p = 2.0 }
/// h = 0.25
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub delone: Option<DeloneConfig>,
    pub capacity: Option<TableSpec>,
    pub homogenize: Option<StudyConfig>,
    pub random: Option<RandomStudyConfig>,
    /// Extra stage of `random`: the ergodic gate.
    pub ergodic: Option<ErgodicConfig>,
    /// Extra stage of `random`: the non-ergodic control.
    pub control: Option<ControlConfig>,
    pub check: Option<CheckConfig>,
}

/// Overrides applied on top of the subcommand tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative residual of every CG solve.
    pub cg_tol: Option<f64>,
    /// Stopping tolerance of the projected-gradient solves.
    pub spg_tol: Option<f64>,
    /// Pass threshold on the relative gap of `homogenize`.
    pub gap_threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeloneConfig {
    /// Deterministic generator; exclusive with `random`.
    pub generator: Option<GeneratorKind>,
    pub random: Option<RandomDeloneConfig>,
    #[serde(default = "unit_square")]
    pub domain: Domain,
    /// Radius `r` of the limit data; the a priori packing radius by default.
    pub r_user: Option<f64>,
    #[serde(default = "default_hist_cell")]
    pub hist_cell: f64,
    /// Largest shell index of the counting check.
    #[serde(default = "default_m_max")]
    pub m_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDeloneConfig {
    pub kind: RandomDeloneKind,
    pub epsilon: f64,
    /// Shifts of the exact stationarity check.
    #[serde(default = "default_shifts")]
    pub shifts: Vec<[i64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicConfig {
    pub epsilon_list: Vec<f64>,
    /// Number of seeds, counted up from the run seed.
    #[serde(default = "default_gate_seeds")]
    pub seeds: usize,
    #[serde(default = "unit_square")]
    pub window: Domain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub law: RadiusLaw,
    /// Number of seeds, counted up from the run seed.
    #[serde(default = "default_control_seeds")]
    pub seeds: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Suites to leave out, by name.
    #[serde(default)]
    pub skip: Vec<String>,
}

fn unit_square() -> Domain {
    Domain::unit_cube(2)
}

fn default_hist_cell() -> f64 {
    0.25
}

fn default_m_max() -> usize {
    3
}

fn default_shifts() -> Vec<[i64; 3]> {
    vec![[1, 0, 0], [0, 1, 0], [5, -3, 0]]
}

fn default_gate_seeds() -> usize {
    5
}

fn default_control_seeds() -> usize {
    8
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}
