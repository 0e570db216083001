use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use flowbert_core::downstream::{CloneFinetuneConfig, EncoderSettings, SearchFinetuneConfig};
use flowbert_core::{Limits, ModelConfig, ObjectiveFlags, PretrainConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Encoder shape; the vocabulary size comes from the vocabulary in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::desk(0);
        Self {
            num_layers: d.num_layers,
            hidden_dim: d.hidden_dim,
            num_heads: d.num_heads,
            ffn_dim: d.ffn_dim,
            max_positions: d.max_positions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSettings {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha: f64,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self { steps: d.steps, batch_size: d.batch_size, lr: d.lr, alpha: d.alpha }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let d = SearchFinetuneConfig::default();
        Self { lr: d.lr, batch_size: d.batch_size, epochs: d.epochs, patience: d.patience }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloneSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub threshold: f32,
}

impl Default for CloneSettings {
    fn default() -> Self {
        let d = CloneFinetuneConfig::default();
        Self { lr: d.lr, batch_size: d.batch_size, epochs: d.epochs, threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything that determines a run. Serialized beside every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelShape,
    /// Upper bound on vocabulary size, reserved tokens included.
    pub max_vocab: usize,
    pub limits: Limits,
    pub objectives: ObjectiveFlags,
    pub use_dataflow: bool,
    pub seed: u64,
    pub pretrain: PretrainSettings,
    pub search: SearchSettings,
    pub clone: CloneSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelShape::default(),
            max_vocab: 5000,
            limits: Limits::default(),
            objectives: ObjectiveFlags::default(),
            use_dataflow: true,
            seed: 0,
            pretrain: PretrainSettings::default(),
            search: SearchSettings::default(),
            clone: CloneSettings::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid run config {}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let l = &self.limits;
        if l.max_comment == 0 || l.max_code == 0 || l.max_nodes == 0 {
            return Err(UsageError("limits must be positive".into()));
        }
        if self.max_vocab == 0 {
            return Err(UsageError("max_vocab must be positive".into()));
        }
        if self.pretrain.batch_size == 0 || self.search.batch_size == 0 || self.clone.batch_size == 0 {
            return Err(UsageError("batch sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data always serializes");
        s.push('\n');
        s
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            num_layers: m.num_layers,
            hidden_dim: m.hidden_dim,
            num_heads: m.num_heads,
            ffn_dim: m.ffn_dim,
            vocab_size,
            max_positions: m.max_positions,
            seed: self.derived_seed(0),
        }
    }

    pub fn encoder_settings(&self) -> EncoderSettings {
        EncoderSettings { limits: self.limits, use_dataflow: self.use_dataflow }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let p = &self.pretrain;
        PretrainConfig {
            objectives: self.objectives,
            use_dataflow: self.use_dataflow,
            limits: self.limits,
            steps: p.steps,
            batch_size: p.batch_size,
            lr: p.lr,
            alpha: p.alpha,
            seed: self.derived_seed(1),
        }
    }

    pub fn search_config(&self) -> SearchFinetuneConfig {
        let s = &self.search;
        SearchFinetuneConfig {
            lr: s.lr,
            batch_size: s.batch_size,
            epochs: s.epochs,
            patience: s.patience,
            seed: self.derived_seed(2),
        }
    }

    pub fn clone_config(&self) -> CloneFinetuneConfig {
        let c = &self.clone;
        CloneFinetuneConfig { lr: c.lr, batch_size: c.batch_size, epochs: c.epochs, seed: self.derived_seed(3) }
    }

    /// Independent seeds for initialization, pre-training and each
    /// fine-tuning task, all fixed by `seed`.
    fn derived_seed(&self, purpose: u64) -> u64 {
        self.seed.wrapping_mul(4).wrapping_add(purpose)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut c = RunConfig { seed: 9, ..Default::default() };
        c.paths.data = Some("corpus.jsonl".into());
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "pretrain": {"steps": 10}}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.pretrain.steps, 10);
        assert_eq!(c.pretrain.batch_size, PretrainSettings::default().batch_size);
        assert_eq!(c.limits, Limits { max_comment: 128, max_code: 256, max_nodes: 64 });
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 3}"#).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let c = RunConfig { seed: 5, ..Default::default() };
        let seeds = [c.model_config(10).seed, c.pretrain_config().seed, c.search_config().seed, c.clone_config().seed];
        for i in 0..4 {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }

    #[test]
    fn zero_limits_invalid() {
        let mut c = RunConfig::default();
        c.limits.max_nodes = 0;
        assert!(c.validate().is_err());
    }
}
