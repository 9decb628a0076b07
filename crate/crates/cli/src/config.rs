//! Experiment configuration file (TOML, one table per pipeline stage).
//!
//! ```toml
//! [data]
//! dataset = "samsum"
//! train = "data/samsum.train.jsonl"
//!
//! [trainer]
//! batch_size = 16
//! ```
//!
//! Command-line flags take precedence over file values.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use dialsum_core::prefix::{DatasetProfile, LingFeature};
use dialsum_core::seq2seq::GenerationConfig;
use dialsum_core::trainer::TrainConfig;

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// `samsum` or `dialsumm`; selects prefix-length defaults.
    pub dataset: Option<String>,
    /// Input format of data files: `canonical`, `samsum` or `dialsumm`.
    pub format: Option<String>,
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub backend: Option<String>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoDataSection {
    pub variant: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrefixSection {
    pub policy: Option<String>,
    pub seed: Option<u64>,
    pub const_len: Option<usize>,
    pub random_lo: Option<usize>,
    pub random_hi: Option<usize>,
    pub ling: Option<LingFeature>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub width: Option<usize>,
    pub min_freq: Option<usize>,
    pub max_vocab: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub no_stem: Option<bool>,
    pub keep_case: Option<bool>,
    /// `deciles` or comma-separated edges.
    pub buckets: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub annotate: AnnotateSection,
    pub pseudo_data: PseudoDataSection,
    pub prefix: PrefixSection,
    pub model: ModelSection,
    pub trainer: toml::Table,
    pub generation: toml::Table,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&raw).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    /// Dataset prefix profile with any `[prefix]` overrides applied.
    pub fn profile(&self, dataset: Option<&str>) -> anyhow::Result<DatasetProfile> {
        let name = dataset.or(self.data.dataset.as_deref()).unwrap_or("samsum");
        let mut p = DatasetProfile::named(name).ok_or_else(|| UsageError(format!("unknown dataset `{name}`")))?;
        if let Some(k) = self.prefix.const_len {
            p.const_len = k;
        }
        if let Some(lo) = self.prefix.random_lo {
            p.random_lo = lo;
        }
        if let Some(hi) = self.prefix.random_hi {
            p.random_hi = hi;
        }
        if let Some(f) = self.prefix.ling {
            p.ling = f;
        }
        Ok(p)
    }

    /// `[trainer]` merged with flag overrides.
    pub fn train_config(&self, overrides: Vec<(&str, toml::Value)>) -> anyhow::Result<TrainConfig> {
        let mut table = self.trainer.clone();
        for (k, v) in overrides {
            table.insert(k.to_string(), v);
        }
        let cfg: TrainConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| UsageError(format!("[trainer]: {e}")))?;
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    /// `[generation]` merged with flag overrides.
    pub fn generation_config(&self, overrides: Vec<(&str, toml::Value)>) -> anyhow::Result<GenerationConfig> {
        let mut table = self.generation.clone();
        for (k, v) in overrides {
            table.insert(k.to_string(), v);
        }
        let cfg: GenerationConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| UsageError(format!("[generation]: {e}")))?;
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

/// Collects `(key, value)` overrides for the flags that were given.
pub fn overrides<'a>(pairs: impl IntoIterator<Item = (&'a str, Option<toml::Value>)>) -> Vec<(&'a str, toml::Value)> {
    pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
}
