//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strain_cascade_core::{IntegratorConfig, ModelParameters};

use crate::error::CliError;

pub const DEFAULT_VERIFY_EPS: f64 = 1e-5;
pub const DEFAULT_OUTPUT_DIR: &str = "strain-cascade-out";

fn default_verify_eps() -> f64 {
    DEFAULT_VERIFY_EPS
}

/// Output directory and report formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write `report.txt`.
    pub text: bool,
    /// Write `report.json`.
    pub json: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            text: true,
            json: true,
        }
    }
}

/// On-disk layout of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    patches: usize,
    strains: usize,
    birth: Vec<f64>,
    death: Vec<f64>,
    beta_diag: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    migration: Vec<Vec<f64>>,
    #[serde(default)]
    integrator: IntegratorConfig,
    #[serde(default)]
    seeds: Vec<u64>,
    #[serde(default = "default_verify_eps")]
    verify_eps: f64,
    #[serde(default)]
    outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParameters,
    pub integrator: IntegratorConfig,
    /// Seeds for randomized initial states.
    pub seeds: Vec<u64>,
    /// Relative distance accepted by `verify`.
    pub verify_eps: f64,
    pub outputs: OutputConfig,
}

impl RunConfig {
    pub fn new(model: ModelParameters) -> Self {
        Self {
            model,
            integrator: IntegratorConfig::default(),
            seeds: Vec::new(),
            verify_eps: DEFAULT_VERIFY_EPS,
            outputs: OutputConfig::default(),
        }
    }

    /// Checks the model, the integrator block and `verify_eps`.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(CliError::Validation)?;
        self.integrator
            .validate()
            .map_err(|e| CliError::Config(format!("integrator: {e}")))?;
        if !(self.verify_eps.is_finite() && self.verify_eps > 0.0) {
            return Err(CliError::Config("verify_eps must be positive".into()));
        }
        Ok(())
    }

    /// Canonical pretty-printed JSON with every optional block spelled out.
    pub fn to_json(&self) -> String {
        let file = ConfigFile {
            patches: self.model.patches,
            strains: self.model.strains,
            birth: self.model.birth.clone(),
            death: self.model.death.clone(),
            beta_diag: self.model.beta_diag.clone(),
            theta: self.model.theta.clone(),
            migration: self.model.migration.clone(),
            integrator: self.integrator.clone(),
            seeds: self.seeds.clone(),
            verify_eps: self.verify_eps,
            outputs: self.outputs.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Parses a config without checking model admissibility.
pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            CliError::Config(format!("config parse error: {inner}"))
        } else {
            CliError::Config(format!("config parse error at `{path}`: {inner}"))
        }
    })?;
    Ok(RunConfig {
        model: ModelParameters {
            patches: file.patches,
            strains: file.strains,
            birth: file.birth,
            death: file.death,
            beta_diag: file.beta_diag,
            theta: file.theta,
            migration: file.migration,
        },
        integrator: file.integrator,
        seeds: file.seeds,
        verify_eps: file.verify_eps,
        outputs: file.outputs,
    })
}

/// Reads, parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config = parse_config_str(&text)
        .map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
    config.validate()?;
    Ok(config)
}
