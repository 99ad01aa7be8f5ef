//! Run configuration for the command-line driver.
//!
//! Every section is optional in the JSON file and unknown keys are rejected.
//! A top-level `seed` overrides every per-module seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srctrace_core::embedding::Split;
use srctrace_core::eval::{ProbeConfig, DEFAULT_BLOCK_SIZE};
use srctrace_core::network::Activation;
use srctrace_core::synth::SynthSpec;
use srctrace_core::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Hidden layer widths between the input features and the embedding.
    pub hidden: Vec<usize>,
    /// Embedding size `C`.
    pub embedding_dim: usize,
    pub activation: Activation,
    /// `None` follows the loss: on for cosine-based losses, off for softmax.
    pub normalize_output: Option<bool>,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            embedding_dim: 50,
            activation: Activation::Relu,
            normalize_output: None,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(&self.hidden);
        w.push(self.embedding_dim);
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub block_size: usize,
    /// Histogram EER with this many bins; exact EER when absent.
    pub bins: Option<usize>,
    pub by_condition: bool,
    /// Manifest split that the evaluated rows belong to.
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            bins: None,
            by_condition: false,
            split: Split::Dev,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory holding `train.emb`, `dev.emb` and `manifest.jsonl`.
    pub data_dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Paths {
    fn in_data_dir(&self, name: &str) -> Option<PathBuf> {
        self.data_dir.as_deref().map(|d| d.join(name))
    }

    pub fn train_file(&self) -> Option<PathBuf> {
        self.train.clone().or_else(|| self.in_data_dir("train.emb"))
    }

    pub fn dev_file(&self) -> Option<PathBuf> {
        self.dev.clone().or_else(|| self.in_data_dir("dev.emb"))
    }

    pub fn manifest_file(&self) -> Option<PathBuf> {
        self.manifest.clone().or_else(|| self.in_data_dir("manifest.jsonl"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub synth: SynthSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub eval: EvalConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Copies the top-level seed into every seeded section.
    pub fn propagate_seed(&mut self) {
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.model.seed = s;
            self.train.seed = s;
            self.train.sampler.seed = s;
            self.probe.seed = s;
        }
    }
}
