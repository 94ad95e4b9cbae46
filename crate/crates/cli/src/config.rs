//! Experiment configuration files.
//!
//! A config is a TOML document with a top-level `name`, `seeds` and
//! `suite_seed`, plus `[env]`, `[net]`, `[train]`, `[eval]` and `[reduce]`
//! tables. Every field except `name` has a default; unknown keys are
//! rejected. Command-line flags override the file.

use std::path::Path;

use amr_core::envs::{ActionSpec, EnvKind, GridConfig, MazeConfig, Variant};
use amr_core::net::{Activation, HeadKind, LayerSpec, PolicyNet};
use amr_core::numerics::Rng;
use amr_core::train::{policy_input_dim, TrainConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bumped when the schema changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Grid(GridConfig),
    Maze(MazeConfig),
}

impl EnvConfig {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvConfig::Grid(c) => EnvKind::Grid(c.clone()),
            EnvConfig::Maze(c) => EnvKind::Maze(c.clone()),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvConfig::Grid(c) => c.obs_dim(),
            EnvConfig::Maze(c) => c.obs_dim(),
        }
    }

    pub fn action_spec(&self) -> ActionSpec {
        match self {
            EnvConfig::Grid(_) => ActionSpec::Categorical(5),
            EnvConfig::Maze(_) => ActionSpec::ContinuousScalar,
        }
    }

    pub fn action_names(&self) -> Vec<&'static str> {
        match self {
            EnvConfig::Grid(_) => amr_core::envs::GridAction::ALL.iter().map(|a| a.name()).collect(),
            EnvConfig::Maze(_) => vec!["omega"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Layers between `[y_t, m_{t-1}]` and the memory layer.
    pub recurrent_hidden: Vec<HiddenLayer>,
    /// Maximum memory dimension `D`.
    pub memory_dim: usize,
    pub memory_activation: String,
    pub memory_bias: bool,
    /// Start each episode from the one-hot memory state 0 rather than the
    /// zero vector (for softmax memories, where zero is not a state).
    pub one_hot_start: bool,
    /// Bias on the output layer.
    pub output_bias: bool,
    /// Layers between `m_t` and the output layer.
    pub head_hidden: Vec<HiddenLayer>,
    /// One memory weight matrix per time step when greater than 1.
    pub memory_steps: usize,
    /// Multiplier on the initial memory-layer weights.
    pub memory_init_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            recurrent_hidden: Vec::new(),
            memory_dim: 10,
            memory_activation: "beta_softmax:100".into(),
            memory_bias: true,
            one_hot_start: false,
            output_bias: true,
            head_hidden: Vec::new(),
            memory_steps: 1,
            memory_init_scale: 1.0,
        }
    }
}

fn parse_activation(s: &str) -> Result<Activation, ConfigError> {
    s.parse()
        .map_err(|e: amr_core::Error| ConfigError::Invalid(format!("net: {e}")))
}

impl NetConfig {
    /// Layer list and head kind for an environment.
    pub fn layers(&self, env: &EnvConfig, augment_action: bool) -> Result<(usize, Vec<LayerSpec>, usize, HeadKind), ConfigError> {
        let input_dim = policy_input_dim(env.obs_dim(), env.action_spec(), augment_action);
        let mut layers = Vec::new();
        let mut width = input_dim + self.memory_dim;
        for h in &self.recurrent_hidden {
            layers.push(LayerSpec::new(width, h.width, parse_activation(&h.activation)?));
            width = h.width;
        }
        let mut memory = LayerSpec::new(width, self.memory_dim, parse_activation(&self.memory_activation)?);
        memory.bias = self.memory_bias;
        layers.push(memory);
        let n_recurrent = layers.len();
        width = self.memory_dim;
        for h in &self.head_hidden {
            layers.push(LayerSpec::new(width, h.width, parse_activation(&h.activation)?));
            width = h.width;
        }
        let (out, head) = match env.action_spec() {
            ActionSpec::Categorical(k) => (LayerSpec::new(width, k, Activation::Softmax), HeadKind::Categorical),
            ActionSpec::ContinuousScalar => (LayerSpec::new(width, 2, Activation::Linear), HeadKind::Gaussian),
        };
        layers.push(if self.output_bias { out } else { out.without_bias() });
        Ok((input_dim, layers, n_recurrent, head))
    }

    pub fn build(&self, env: &EnvConfig, augment_action: bool, rng: &mut Rng) -> Result<PolicyNet, ConfigError> {
        let (input_dim, layers, n_recurrent, head) = self.layers(env, augment_action)?;
        if !(self.memory_init_scale.is_finite() && self.memory_init_scale >= 0.0) {
            return Err(ConfigError::Invalid("net: memory_init_scale must be finite and non-negative".into()));
        }
        let mut net = PolicyNet::init(input_dim, layers, n_recurrent, head, self.memory_steps, rng)
            .map_err(|e| ConfigError::Invalid(format!("net: {e}")))?;
        for slot in net.memory_weight_slots().to_vec() {
            net.params_mut()[slot].scale(self.memory_init_scale);
        }
        net.with_start_state(self.one_hot_start.then_some(0))
            .map_err(|e| ConfigError::Invalid(format!("net: {e}")))
    }

    /// Whether memory states are (near) one-hot, so Moore machines apply.
    pub fn discrete_memory(&self) -> bool {
        parse_activation(&self.memory_activation)
            .map(|a| a.softmax_beta().is_some())
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub variants: Vec<String>,
    pub episodes: usize,
    /// Use the distribution mode instead of sampling.
    pub deterministic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            variants: vec!["test".into()],
            episodes: 20,
            deterministic: false,
        }
    }
}

impl EvalConfig {
    pub fn variants(&self) -> Result<Vec<Variant>, ConfigError> {
        self.variants
            .iter()
            .map(|v| v.parse().map_err(|e: amr_core::Error| ConfigError::Invalid(format!("eval: {e}"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceConfig {
    pub finetune_epochs: usize,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self { finetune_epochs: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seed for generating environment suites.
    #[serde(default)]
    pub suite_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: String,
    pub env: EnvConfig,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub reduce: ReduceConfig,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> String {
    "runs".into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "version: expected {SCHEMA_VERSION}, found {}",
                self.version
            )));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(ConfigError::Invalid("name: must be a nonempty file-name-safe string".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds: need at least one seed".into()));
        }
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("train: {e}")))?;
        self.eval.variants()?;
        let mut rng = Rng::new(0);
        self.net.build(&self.env, self.train.augment_action, &mut rng)?;
        Ok(())
    }

    /// Training settings for one seed.
    pub fn train_for(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
[env]
kind = "grid"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL, "inline").unwrap();
        assert_eq!(c.env, EnvConfig::Grid(GridConfig::default()));
        assert_eq!(c.net.memory_dim, 10);
        assert_eq!(c.seeds, vec![0]);
    }

    #[test]
    fn snapshot_round_trips() {
        let c = ExperimentConfig::from_toml(MINIMAL, "inline").unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml(), "snapshot").unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\n[train]\nlearning_rat = 0.1\n");
        match ExperimentConfig::from_toml(&text, "inline") {
            Err(ConfigError::Parse { message, .. }) => assert!(message.contains("learning_rat")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_activation_rejected() {
        let text = format!("{MINIMAL}\n[net]\nmemory_activation = \"relu\"\n");
        assert!(ExperimentConfig::from_toml(&text, "inline").is_err());
    }
}
