//! JSON experiment definitions.
//!
//! A config file holds either one experiment object or
//! `{"experiments": [...]}`. An experiment looks like
//!
//! ```json
//! {
//!   "name": "ffnn_ctc_n4",
//!   "topology": "B* a+ B*",
//!   "target": ["a"],
//!   "blank": "B",
//!   "input": {"kind": "single_label", "n": 4},
//!   "model": {"kind": "ffnn", "with_bias": false},
//!   "loss": {"kind": "ctc"},
//!   "train": {"learning_rate": 0.1, "max_steps": 50000}
//! }
//! ```
//!
//! `input.kind` is `single_label` (`n`), `scaled_ping` (`frames`) or
//! `blocks` (`blocks: [[symbol, length], ...]`, `symbols: {symbol: index}`,
//! optional `dim`). `loss.kind` is `ctc`, `generative` or `hybrid` with
//! `prior` in `softmax | stop_grad | learned | ema` (`decay` for `ema`,
//! optional initial `logits` for `learned`). Omitted `train` fields take the
//! [`TrainConfig`] defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossKind, PriorMode};
use crate::models::{ModelDims, ModelKind, ModelSpec};
use crate::signals::{block_input, scaled_ping_input, single_label_input, InputSequence};
use crate::topology::LabelTopology;
use crate::training::{Task, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    Many { experiments: Vec<ExperimentConfig> },
    One(ExperimentConfig),
}

impl ConfigFile {
    pub fn into_experiments(self) -> Vec<ExperimentConfig> {
        match self {
            ConfigFile::Many { experiments } => experiments,
            ConfigFile::One(e) => vec![e],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub topology: String,
    /// Fixes the label order; defaults to the order derived from the spec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<Vec<String>>,
    pub target: Vec<String>,
    pub blank: String,
    pub input: InputConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    SingleLabel { n: usize },
    ScaledPing { frames: usize },
    Blocks {
        blocks: Vec<(String, usize)>,
        symbols: BTreeMap<String, usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
}

impl InputConfig {
    pub fn build(&self) -> Result<InputSequence> {
        match self {
            InputConfig::SingleLabel { n } => single_label_input(*n),
            InputConfig::ScaledPing { frames } => scaled_ping_input(*frames),
            InputConfig::Blocks { blocks, symbols, dim } => {
                let dim = dim.unwrap_or_else(|| symbols.values().max().map_or(0, |m| m + 1));
                block_input(blocks, dim, symbols)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    #[serde(default)]
    pub with_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
}

impl LossConfig {
    pub fn build(&self, labels: usize) -> Result<LossKind> {
        let loss = match (self.kind.as_str(), self.prior.as_deref()) {
            ("ctc", None) => LossKind::Ctc,
            ("generative", None) => LossKind::Generative,
            ("hybrid", Some("softmax")) => LossKind::Hybrid(PriorMode::Softmax),
            ("hybrid", Some("stop_grad")) => LossKind::Hybrid(PriorMode::StopGrad),
            ("hybrid", Some("learned")) => LossKind::Hybrid(PriorMode::Learned {
                logits: self.logits.clone().unwrap_or_else(|| vec![0.0; labels]),
            }),
            ("hybrid", Some("ema")) => LossKind::Hybrid(PriorMode::Ema { decay: self.decay.unwrap_or(0.99) }),
            ("hybrid", None) => return Err(Error::Parse("hybrid loss needs a `prior`".into())),
            (kind, Some(prior)) if kind != "hybrid" => {
                return Err(Error::Parse(format!("`prior: {prior}` only applies to the hybrid loss")))
            }
            (kind, prior) => {
                return Err(Error::Parse(format!("unknown loss `{kind}` (prior {prior:?})")));
            }
        };
        if let LossKind::Hybrid(PriorMode::Learned { logits }) = &loss {
            if logits.len() != labels {
                return Err(Error::DimensionMismatch(format!(
                    "{} prior logits for {labels} labels",
                    logits.len()
                )));
            }
        }
        if let LossKind::Hybrid(mode) = &loss {
            mode.validate()?;
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub stop_delta: f64,
    pub convergence_loss_threshold: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realign_every: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainConfig::default().into()
    }
}

impl From<TrainConfig> for TrainSection {
    fn from(c: TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            max_steps: c.max_steps,
            stop_delta: c.stop_delta,
            convergence_loss_threshold: c.convergence_loss_threshold,
            seed: c.seed,
            realign_every: c.realign_every,
        }
    }
}

impl From<&TrainSection> for TrainConfig {
    fn from(s: &TrainSection) -> Self {
        Self {
            learning_rate: s.learning_rate,
            max_steps: s.max_steps,
            stop_delta: s.stop_delta,
            convergence_loss_threshold: s.convergence_loss_threshold,
            seed: s.seed,
            realign_every: s.realign_every,
        }
    }
}

/// Everything needed to call [`crate::training::train`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub task: Task,
    pub model: ModelSpec,
    pub loss: LossKind,
    pub config: TrainConfig,
}

impl ExperimentConfig {
    pub fn build(&self) -> Result<Experiment> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Parse(format!("experiment name `{}` must be [A-Za-z0-9_-]+", self.name)));
        }
        let topology = match &self.alphabet {
            Some(alphabet) => LabelTopology::parse_with_alphabet(&self.topology, alphabet)?,
            None => LabelTopology::parse(&self.topology)?,
        };
        let index = |name: &str| {
            topology
                .label_index(name)
                .ok_or_else(|| Error::UnknownLabel(name.to_string()))
        };
        let blank = index(&self.blank)?;
        let target = self.target.iter().map(|t| index(t)).collect::<Result<Vec<_>>>()?;
        let input = self.input.build()?;
        let kind = ModelKind::from_name(&self.model.kind)?;
        let dims = ModelDims {
            labels: topology.num_labels(),
            input_dim: input.dim(),
            frames: input.len(),
            with_bias: self.model.with_bias,
        };
        let loss = self.loss.build(topology.num_labels())?;
        let config = TrainConfig::from(&self.train);
        config.validate()?;
        Ok(Experiment {
            name: self.name.clone(),
            model: ModelSpec::init_uniform(kind, dims),
            task: Task { topology, input, target, blank },
            loss,
            config,
        })
    }
}

pub fn parse_config(text: &str) -> Result<Vec<ExperimentConfig>> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
    let experiments = file.into_experiments();
    if experiments.is_empty() {
        return Err(Error::Parse("config lists no experiments".into()));
    }
    Ok(experiments)
}

pub fn load_config(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
