use std::path::{Path, PathBuf};

use ipi_core::driver::{EnvironmentConfig, IpiConfig, MethodConfig, RbfConfig, RewardConfig, RunConfig, SamplingConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable that overrides `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "IPI_OUTPUT_DIR";

/// An [`IpiConfig`] plus where and how to write the run artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub reward: RewardConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub rbf: RbfConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Start of the final-policy rollout; `[1.1π, 0]` for the pendulum and
    /// all ones for LQR when omitted.
    pub x0: Option<Vec<f64>>,
    pub horizon: f64,
    /// Integration step of the rollout.
    pub substep: f64,
    /// Spacing of the rows written to `trajectory.csv`.
    pub sample_every: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            x0: None,
            horizon: 10.0,
            substep: 1e-3,
            sample_every: 0.01,
        }
    }
}

impl ExperimentConfig {
    pub fn ipi(&self) -> IpiConfig {
        IpiConfig {
            environment: self.environment.clone(),
            reward: self.reward.clone(),
            method: self.method.clone(),
            sampling: self.sampling.clone(),
            rbf: self.rbf.clone(),
            run: self.run.clone(),
        }
    }

    /// `output.dir`, unless overridden by [`OUTPUT_DIR_ENV`].
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output.dir.clone(),
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_config(&text)
}
