//! JSON experiment configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{generate_synthetic, generate_toy_1d, load_csv, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{Activation, LayerSpec, OptimizerSpec};
use crate::protection::MechanismConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        n: usize,
        d_in: usize,
        pos_frac: f64,
        separation: f64,
        #[serde(default = "one")]
        noise_scale: f64,
        #[serde(default)]
        seed: u64,
    },
    Toy1d {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            &DatasetSpec::Synthetic {
                n,
                d_in,
                pos_frac,
                separation,
                noise_scale,
                seed,
            } => generate_synthetic(&SyntheticSpec {
                n,
                d_in,
                pos_frac,
                separation,
                noise_scale,
                seed,
            }),
            &DatasetSpec::Toy1d { n, seed } => generate_toy_1d(n, seed),
            DatasetSpec::Csv { path } => load_csv(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub units: usize,
    pub activation: Activation,
}

/// Layer stack of the whole model; the first `cut_index` layers form `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub layers: Vec<LayerConfig>,
    pub cut_index: usize,
}

impl Default for NetSpec {
    fn default() -> Self {
        let l = |units, activation| LayerConfig { units, activation };
        NetSpec {
            layers: vec![
                l(32, Activation::Relu),
                l(32, Activation::Relu),
                l(16, Activation::Relu),
                l(1, Activation::Identity),
            ],
            cut_index: 2,
        }
    }
}

impl NetSpec {
    pub fn layer_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut in_dim = input_dim;
        self.layers
            .iter()
            .map(|l| {
                let s = LayerSpec {
                    in_dim,
                    out_dim: l.units,
                    activation: l.activation,
                };
                in_dim = l.units;
                s
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cut_index == 0 || self.cut_index >= self.layers.len() {
            return Err(Error::Config(format!(
                "cut_index {} must leave both parties at least one layer ({} layers)",
                self.cut_index,
                self.layers.len()
            )));
        }
        if self.layers.iter().any(|l| l.units == 0) {
            return Err(Error::Config("layer units must be >= 1".into()));
        }
        if self.layers.last().map(|l| l.units) != Some(1) {
            return Err(Error::Config("last layer must have exactly 1 unit (the logit)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub net: NetSpec,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerSpec,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_mechanism")]
    pub mechanism: MechanismConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_test_fraction() -> f64 {
    0.2
}
fn default_optimizer() -> OptimizerSpec {
    OptimizerSpec::adam(1e-3)
}
fn default_batch_size() -> usize {
    64
}
fn default_iterations() -> usize {
    200
}
fn default_mechanism() -> MechanismConfig {
    MechanismConfig::None
}

impl ExperimentConfig {
    /// Defaults around the given dataset.
    pub fn with_dataset(dataset: DatasetSpec) -> Self {
        ExperimentConfig {
            dataset,
            test_fraction: default_test_fraction(),
            net: NetSpec::default(),
            optimizer: default_optimizer(),
            batch_size: default_batch_size(),
            iterations: default_iterations(),
            mechanism: default_mechanism(),
            seed: 0,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!("test_fraction {} outside [0, 1)", self.test_fraction)));
        }
        let lr = match self.optimizer {
            OptimizerSpec::Sgd { lr } | OptimizerSpec::Adam { lr, .. } => lr,
        };
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be finite and > 0")));
        }
        self.mechanism.validate().map_err(|e| Error::Config(e.to_string()))
    }
}
