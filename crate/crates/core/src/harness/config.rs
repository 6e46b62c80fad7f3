use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{DesignKind, DesignSpec};
use crate::error::{Error, Result};
use crate::glm::{Family, FamilyKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonconvergencePolicy {
    /// Drop non-converged replications from the p-value sample and count them.
    Exclude,
    /// Abort the run on the first non-converged fit.
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignChoice {
    Stiefel,
    Ar1,
}

fn default_magnitude() -> f64 {
    3.0
}

fn default_tested() -> usize {
    1
}

fn default_policy() -> NonconvergencePolicy {
    NonconvergencePolicy::Exclude
}

fn default_workers() -> usize {
    1
}

fn default_dispersion() -> f64 {
    1.0
}

/// Full description of a grid experiment. Keys in the config file match the
/// field names one to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub delta: f64,
    pub r_inner: usize,
    pub r_outer: usize,
    pub design: DesignChoice,
    #[serde(default)]
    pub rho: f64,
    pub s: usize,
    #[serde(default = "default_magnitude")]
    pub signal_magnitude: f64,
    pub family: FamilyKind,
    /// Known error variance for the linear family; ignored otherwise.
    #[serde(default = "default_dispersion")]
    pub dispersion: f64,
    #[serde(default = "default_tested")]
    pub tested_coordinate: usize,
    pub master_seed: u64,
    #[serde(default = "default_policy")]
    pub nonconvergence_policy: NonconvergencePolicy,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Explicit α₀ values replacing the default grid around 2/3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    /// Draw β₀ once per grid point instead of once per inner replication.
    #[serde(default)]
    pub fixed_beta0: bool,
    #[serde(default)]
    pub rescale_columns: bool,
    #[serde(default)]
    pub include_intercept: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn family(&self) -> Result<Family> {
        Family::from_kind(self.family, self.dispersion)
    }

    pub fn design_kind(&self) -> DesignKind {
        match self.design {
            DesignChoice::Stiefel => DesignKind::StiefelUniform,
            DesignChoice::Ar1 => DesignKind::GaussianAr1 { rho: self.rho },
        }
    }

    pub fn design_spec(&self, p: usize) -> Result<DesignSpec> {
        let spec = DesignSpec {
            kind: self.design_kind(),
            n: self.n,
            p,
            rescale_columns: self.rescale_columns,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return fail(format!("n must be at least 2, got {}", self.n));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return fail(format!("delta must be positive, got {}", self.delta));
        }
        if self.r_inner < 10 {
            return fail(format!("r_inner must be at least 10, got {}", self.r_inner));
        }
        if self.r_outer == 0 {
            return fail("r_outer must be positive".into());
        }
        if !self.s.is_multiple_of(2) {
            return fail(format!("s must be even, got {}", self.s));
        }
        if self.tested_coordinate == 0 {
            return fail("tested_coordinate is 1-based".into());
        }
        if self.workers == 0 {
            return fail("workers must be positive".into());
        }
        if !(self.signal_magnitude.is_finite()) {
            return fail("signal_magnitude must be finite".into());
        }
        self.design_kind().validate()?;
        self.family()?;
        if let Some(grid) = &self.alpha_grid {
            if grid.is_empty() {
                return fail("alpha_grid must not be empty".into());
            }
        }
        Ok(())
    }

    /// The fields that determine results; `workers` and `output_dir` do not.
    pub(crate) fn result_identity(&self) -> Self {
        Self {
            workers: 1,
            output_dir: PathBuf::new(),
            ..self.clone()
        }
    }
}
