//! Pipeline configuration: one JSON file shared by every subcommand, with
//! per-stage sections and a single seed that feeds all randomness.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::ChunkConfig;
use crate::mlm::MaskingConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("split fractions must be positive and sum to 1 (got {0}, {1}, {2})")]
    BadSplit(f64, f64, f64),
    #[error("invalid chunker config: {0}")]
    Chunker(#[from] crate::chunker::ChunkConfigError),
    #[error("invalid masking config: {0}")]
    Masking(#[from] crate::mlm::MlmError),
}

fn default_seed() -> u64 {
    42
}

fn default_split() -> SplitSection {
    SplitSection {
        train: 0.8,
        validation: 0.1,
        test: 0.1,
    }
}

/// train/validation/test fractions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSection {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

fn default_k_max() -> usize {
    100
}

fn default_pool_per_topic() -> usize {
    500
}

/// Retrieval-stage inputs: where the embedding file and query list live.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RetrievalSection {
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub queries: Option<PathBuf>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_pool_per_topic")]
    pub pool_per_topic: usize,
}

fn default_concurrency() -> usize {
    4
}

fn default_temperature() -> f64 {
    1.0
}

fn default_api_key_env() -> String {
    "FINPREP_API_KEY".to_string()
}

/// LLM client settings for QA generation. The API key never appears in the
/// file; only the name of the environment variable holding it does.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QagenSection {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// When set, requests are answered from this fixture instead of HTTP.
    #[serde(default)]
    pub replay_fixture: Option<PathBuf>,
    #[serde(default)]
    pub retries: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl Default for QagenSection {
    fn default() -> Self {
        QagenSection {
            endpoint: String::new(),
            model: String::new(),
            temperature: default_temperature(),
            api_key_env: default_api_key_env(),
            replay_fixture: None,
            retries: 0,
            concurrency: default_concurrency(),
        }
    }
}

/// Top-level configuration, deserialized from one JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    #[serde(default)]
    pub chunker: ChunkConfig,
    #[serde(default)]
    pub masking: MaskingConfig,
    #[serde(default = "default_split")]
    pub split: SplitSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub qagen: QagenSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: default_seed(),
            vocab: None,
            chunker: ChunkConfig::default(),
            masking: MaskingConfig::default(),
            split: default_split(),
            retrieval: RetrievalSection::default(),
            qagen: QagenSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        let config: PipelineConfig = serde_json::from_str(&raw)?;
        config.validate()?;
        Ok(config)
    }

    /// Check numeric invariants and, for paths named in the file, that they
    /// exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.chunker.validate()?;
        self.masking.validate()?;
        let s = self.split;
        if s.train <= 0.0
            || s.validation <= 0.0
            || s.test <= 0.0
            || (s.train + s.validation + s.test - 1.0).abs() > 1e-9
        {
            return Err(ConfigError::BadSplit(s.train, s.validation, s.test));
        }
        for path in [
            self.vocab.as_ref(),
            self.retrieval.embeddings.as_ref(),
            self.retrieval.queries.as_ref(),
            self.qagen.replay_fixture.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(ConfigError::MissingFile(path.clone()));
            }
        }
        Ok(())
    }
}
