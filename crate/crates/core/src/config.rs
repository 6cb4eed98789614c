//! Run configuration read from TOML.
//!
//! ```toml
//! seed = 1
//!
//! [data]
//! response = "y"
//! group = "subject"
//! intercept = true                  # adds a column of ones named "intercept"
//! random_effects = ["intercept", "time"]
//! unpenalized = ["intercept", "time"]
//! # fixed_effects = ["time", "x1"]  # default: every other column
//!
//! [penalty]
//! family = "scad"
//! a = 3.7
//! lambda = 0.05                     # used by `fit`
//!
//! [variance]
//! structure = "diagonal"            # or "isotropic"
//!
//! [path]
//! n_points = 30
//! ratio = 0.001
//! folds = 10
//!
//! [solver]
//! max_outer_iterations = 200
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VarianceStructure;
use crate::penalty::{PenaltyFamily, DEFAULT_SCAD_A};
use crate::selection::PathConfig;
use crate::solver::SolverConfig;

/// Name of the column of ones added when `intercept = true`.
pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub response: String,
    pub group: String,
    #[serde(default = "yes")]
    pub intercept: bool,
    pub random_effects: Vec<String>,
    #[serde(default)]
    pub unpenalized: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_effects: Option<Vec<String>>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    #[serde(flatten)]
    pub family: PenaltyFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            family: PenaltyFamily::Scad { a: DEFAULT_SCAD_A },
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    pub structure: VarianceStructure,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        Self {
            structure: VarianceStructure::Diagonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Default for `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub variance: VarianceConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.random_effects.is_empty() {
            return Err(Error::Config("data.random_effects must name at least one column".into()));
        }
        if d.response == d.group {
            return Err(Error::Config("response and group columns must differ".into()));
        }
        for name in d.random_effects.iter().chain(&d.unpenalized) {
            if name == &d.response || name == &d.group {
                return Err(Error::Config(format!(
                    "column '{name}' cannot be both a covariate and the response or group"
                )));
            }
        }
        if let Some(l) = self.penalty.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("penalty.lambda = {l} must be finite and nonnegative")));
            }
        }
        crate::penalty::PenaltySpec::new(self.penalty.family, 0.0)
            .map_err(|e| Error::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))
    }
}
