//! TOML experiment configuration.
//!
//! ```toml
//! n_ranks = 18
//! n_steps = 25
//! t_exec_us = 3000.0
//! seed = 0
//!
//! [topology]
//! direction = "unidirectional"   # or "bidirectional"
//! boundary = "open"              # or "periodic"
//! distance = 1
//!
//! [protocol]
//! message_size_bytes = 8192
//! eager_limit_bytes = 16384
//! # override = "force_eager" | "force_rendezvous"
//! # eager_buffer_cap = 4
//!
//! [cost]
//! latency_us = 3.0
//! bandwidth_bytes_per_us = 3000.0
//!
//! [noise]
//! mean_relative_delay = 0.0
//! enabled = true
//!
//! [[delays]]
//! rank = 5
//! step = 1
//! duration_us = 13500.0
//!
//! [analysis]
//! theta = 0.05
//! window = 3
//! seeds = []
//!
//! [output]
//! dir = "out"
//!
//! [sweep]
//! parameter = "noise"            # "noise" | "distance" | "message_size" | "n_ranks"
//! values = [0.05, 0.10]
//! repetitions = 15
//! ```
//!
//! Everything but `n_ranks`, `n_steps` and `t_exec_us` has a default.
//! Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{DEFAULT_THETA, DEFAULT_WINDOW};
use crate::comm::{CostModel, ProtocolConfig, Topology};
use crate::error::{Error, Result};
use crate::perturbation::{DelaySpec, NoiseSpec};
use crate::sim::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Seeds for multi-run statistics; empty means `seed, seed+1, ...`.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            window: DEFAULT_WINDOW,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Mean relative noise `E`.
    Noise,
    Distance,
    MessageSize,
    NRanks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

fn default_repetitions() -> usize {
    15
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep.values", "needs at least one value"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("sweep.repetitions", "must be >= 1"));
        }
        for (i, v) in self.values.iter().enumerate() {
            let integral = !matches!(self.parameter, SweepParameter::Noise);
            if !v.is_finite() || *v < 0.0 || (integral && v.fract() != 0.0) {
                return Err(Error::config(
                    format!("sweep.values[{i}]"),
                    format!("{v} is not a valid {:?} value", self.parameter),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_ranks: usize,
    pub n_steps: usize,
    pub t_exec_us: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub delays: Vec<DelaySpec>,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            n_ranks: s.n_ranks,
            n_steps: s.n_steps,
            t_exec_us: s.t_exec_us,
            seed: s.seed,
            topology: s.topology,
            protocol: s.protocol,
            cost: s.cost,
            noise: s.noise,
            delays: s.delays.clone(),
            analysis: AnalysisSettings::default(),
            output: OutputSettings::default(),
            sweep: None,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            n_ranks: self.n_ranks,
            n_steps: self.n_steps,
            t_exec_us: self.t_exec_us,
            topology: self.topology,
            protocol: self.protocol,
            cost: self.cost,
            noise: self.noise,
            delays: self.delays.clone(),
            seed: self.seed,
        }
    }

    /// Seeds for repeated runs: the explicit list, else `count` seeds
    /// counting up from `seed`.
    pub fn seeds(&self, count: usize) -> Vec<u64> {
        if self.analysis.seeds.is_empty() {
            (0..count as u64).map(|i| self.seed.wrapping_add(i)).collect()
        } else {
            self.analysis.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_exec_us.is_finite() && self.t_exec_us >= 0.0) {
            return Err(Error::config("t_exec_us", "must be finite and >= 0"));
        }
        let theta = self.analysis.theta;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::config("analysis.theta", "must lie in (0, 1)"));
        }
        if self.analysis.window == 0 {
            return Err(Error::config("analysis.window", "must be >= 1"));
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        self.scenario().validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates a TOML document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::new(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::config(
            if path == "." { String::new() } else { path },
            inner.message().trim().to_string(),
        )
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
