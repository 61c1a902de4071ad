//! Experiment configuration: a TOML file with `[sim]`, `[model]`, `[train]`
//! sections and one `[[variants]]` table per compared loss.
//!
//! Parsing is strict: unknown keys are rejected and every omitted value takes
//! its documented default, so [`ExperimentConfig::to_toml_string`] echoes the
//! full effective configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::losses::{LossKind, LossSpec};
use crate::scorer::Activation;
use crate::simulator::SimConfig;
use crate::trainer::{TrainConfig, TrainHyperparams};
use crate::{Error, Result, INPUT_DIM};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataBias {
    /// Training log sent uniformly random documents.
    #[default]
    Unbiased,
    /// Training log from epsilon-greedy around a pointwise scorer trained on a
    /// separate unbiased log.
    Biased,
}

impl DataBias {
    pub fn label(self) -> &'static str {
        match self {
            DataBias::Unbiased => "unbiased",
            DataBias::Biased => "biased",
        }
    }
}

fn default_hidden_dims() -> Vec<usize> {
    vec![64, 32]
}
fn default_activation() -> Activation {
    Activation::Sigmoid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: default_hidden_dims(),
            activation: default_activation(),
        }
    }
}

impl ModelConfig {
    /// The larger LeakyReLU network used for production-scale runs.
    pub fn production_preset() -> Self {
        Self {
            hidden_dims: vec![256, 128, 64],
            activation: Activation::LeakyRelu {
                slope: Activation::DEFAULT_LEAKY_SLOPE,
            },
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![INPUT_DIM];
        dims.extend(&self.hidden_dims);
        dims.push(1);
        dims
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub name: String,
    pub loss: LossSpec,
}

fn default_variants() -> Vec<VariantConfig> {
    let v = |name: &str, kind| VariantConfig {
        name: name.into(),
        loss: LossSpec::default_for(kind),
    };
    vec![
        v("pointwise", LossKind::PointwiseCe),
        v("pairwise", LossKind::PairwiseHinge),
        v("kos_auc", LossKind::KosAuc),
        v("expected_regret", LossKind::ExpectedRegret),
    ]
}
fn default_n_seeds() -> usize {
    10
}
fn default_eval_interactions() -> usize {
    20_000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_baseline() -> String {
    "pointwise".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    /// Fresh candidate sets per seed used for regret evaluation.
    #[serde(default = "default_eval_interactions")]
    pub eval_interactions: usize,
    #[serde(default)]
    pub data_bias: DataBias,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Variant that gains are measured against.
    #[serde(default = "default_baseline")]
    pub baseline: String,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainHyperparams,
    #[serde(default = "default_variants")]
    pub variants: Vec<VariantConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_seeds: default_n_seeds(),
            eval_interactions: default_eval_interactions(),
            data_bias: DataBias::default(),
            output_dir: default_output_dir(),
            baseline: default_baseline(),
            sim: SimConfig::default(),
            model: ModelConfig::default(),
            train: TrainHyperparams::default(),
            variants: default_variants(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serialises to TOML")
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_seeds == 0 {
            return cfg("n_seeds must be >= 1".into());
        }
        if self.eval_interactions == 0 {
            return cfg("eval_interactions must be >= 1".into());
        }
        if self.sim.master_seed > i64::MAX as u64 {
            return cfg(format!("master_seed must be <= {}", i64::MAX));
        }
        self.sim.validate()?;
        self.train.validate()?;
        if self.model.hidden_dims.contains(&0) {
            return cfg("hidden_dims must be positive".into());
        }
        if let Activation::LeakyRelu { slope } = self.model.activation {
            if !slope.is_finite() {
                return cfg("leaky ReLU slope must be finite".into());
            }
        }
        if self.variants.is_empty() {
            return cfg("at least one variant is required".into());
        }
        let mut names = BTreeSet::new();
        for v in &self.variants {
            if v.name.trim().is_empty() {
                return cfg("variant names must be nonempty".into());
            }
            if !names.insert(v.name.as_str()) {
                return cfg(format!("duplicate variant name '{}'", v.name));
            }
            v.loss.validate()?;
        }
        if !names.contains(self.baseline.as_str()) {
            return cfg(format!("baseline '{}' is not a configured variant", self.baseline));
        }
        Ok(())
    }

    pub fn variant(&self, name: &str) -> Result<&VariantConfig> {
        self.variants
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::Config(format!("no variant named '{name}'")))
    }

    /// Seeds used for the runs: `master_seed + i`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64)
            .map(|i| self.sim.master_seed.wrapping_add(i))
            .collect()
    }

    pub fn train_config(&self, loss: LossSpec, seed: u64) -> TrainConfig {
        TrainConfig {
            hyper: self.train.clone(),
            loss,
            candidate_set_size: self.sim.n_candidates,
            seed,
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    ExperimentConfig::from_toml_str(&text, path)
}
