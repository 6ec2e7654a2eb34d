//! JSON experiment configuration. Keys mirror the experiment and model
//! parameter fields one to one; command-line overrides win over file values.

use crate::error::{Error, Result};
use crate::scheme::ModelParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsConfig {
    pub nu: f64,
    pub chi: f64,
    pub delta: f64,
    #[serde(default = "default_b")]
    pub b: [f64; 2],
    #[serde(default = "default_length")]
    pub length: f64,
}

fn default_b() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_length() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelConfig {
    /// Cells per side of the coarse mesh.
    pub n: usize,
    /// Coarse time step.
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDataKind {
    /// u0 = c0 = sin(pi x) sin(pi y).
    SineProduct,
    /// u0 = c0 = sin(2 pi x) sin(2 pi y), smooth across the periodic seam.
    SmoothPeriodic,
    /// Concentrated Gaussians centred in the domain (blow-up data).
    GaussianBlowup,
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Free-form label echoed into outputs.
    #[serde(default)]
    pub name: String,
    pub params: ParamsConfig,
    #[serde(default)]
    pub levels: Vec<LevelConfig>,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Finest Wiener resolution; the effective resolution is the minimum of
    /// this and the smallest time step in the experiment.
    #[serde(default = "default_k0")]
    pub k0: f64,
    #[serde(default = "default_initial_data")]
    pub initial_data: InitialDataKind,
    /// Blow-up horizons (used by the blowup driver only).
    #[serde(default)]
    pub blowup_times: Vec<f64>,
    /// When set, reference trajectories are cached here and reused by
    /// repeated studies with identical determinants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<String>,
}

fn default_t_final() -> f64 {
    1.0
}

fn default_samples() -> usize {
    50
}

fn default_k0() -> f64 {
    1.0 / 2048.0
}

fn default_initial_data() -> InitialDataKind {
    InitialDataKind::SineProduct
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            nu: self.params.nu,
            chi: self.params.chi,
            delta: self.params.delta,
            b: self.params.b,
            length: self.params.length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_params().validate()?;
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if !(self.k0 > 0.0) {
            return Err(Error::Config("k0 must be positive".into()));
        }
        for l in &self.levels {
            if l.n < 2 {
                return Err(Error::Config(format!("level n = {} is below 2", l.n)));
            }
            if !(l.k > 0.0) {
                return Err(Error::Config("level k must be positive".into()));
            }
        }
        Ok(())
    }
}
