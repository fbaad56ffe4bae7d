use serde::{Deserialize, Serialize};

use crate::error::{LtcsError, Result};
use crate::real::Precision;

/// Architecture hyperparameters of the co-trained ranker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtcsConfig {
    pub query_feature_dim: usize,
    pub item_feature_dim: usize,
    /// Hidden widths of the initial ranker; the last one is the embedding width.
    pub initial_hidden_widths: Vec<usize>,
    pub rerank_hidden_widths: Vec<usize>,
    pub encoder_layers: usize,
    pub attention_heads: usize,
    pub top_k: usize,
    /// Weight of the re-ranker loss in the combined objective.
    pub alpha: f64,
    pub smelu_beta: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Feed-forward width of each encoder layer, as a multiple of the embedding width.
    #[serde(default = "default_ffn_multiplier")]
    pub ffn_multiplier: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
}

fn default_ffn_multiplier() -> usize {
    2
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl LtcsConfig {
    /// CPU-sized architecture used by the experiment harness.
    pub fn desk() -> Self {
        LtcsConfig {
            query_feature_dim: 4,
            item_feature_dim: 12,
            initial_hidden_widths: vec![64, 32, 16],
            rerank_hidden_widths: vec![32, 16],
            encoder_layers: 2,
            attention_heads: 2,
            top_k: 10,
            alpha: 0.5,
            smelu_beta: 1.0,
            seed: 0,
            precision: Precision::F32,
            ffn_multiplier: default_ffn_multiplier(),
            layer_norm_eps: default_ln_eps(),
        }
    }

    /// Production-sized architecture: 2048-1024-512-256-64 initial ranker,
    /// 30 encoder layers with 4 heads over the top 40, 256-128-64 re-ranker.
    pub fn paper() -> Self {
        LtcsConfig {
            query_feature_dim: 64,
            item_feature_dim: 256,
            initial_hidden_widths: vec![2048, 1024, 512, 256, 64],
            rerank_hidden_widths: vec![256, 128, 64],
            encoder_layers: 30,
            attention_heads: 4,
            top_k: 40,
            alpha: 0.5,
            smelu_beta: 1.0,
            seed: 0,
            precision: Precision::F32,
            ffn_multiplier: 4,
            layer_norm_eps: default_ln_eps(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(LtcsError::Config(format!("unknown preset {other:?} (expected desk or paper)"))),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.initial_hidden_widths.last().copied().unwrap_or(0)
    }

    pub fn input_dim(&self) -> usize {
        self.query_feature_dim + self.item_feature_dim
    }

    pub fn ff_width(&self) -> usize {
        self.embedding_dim() * self.ffn_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(LtcsError::Config(m));
        if self.query_feature_dim == 0 {
            return err("query_feature_dim must be >= 1".into());
        }
        if self.item_feature_dim == 0 {
            return err("item_feature_dim must be >= 1".into());
        }
        if self.initial_hidden_widths.is_empty() {
            return err("initial_hidden_widths must not be empty".into());
        }
        if let Some(w) = self.initial_hidden_widths.iter().chain(&self.rerank_hidden_widths).find(|&&w| w == 0) {
            return err(format!("layer widths must be >= 1, got {w}"));
        }
        if self.encoder_layers == 0 {
            return err("encoder_layers must be >= 1".into());
        }
        if self.top_k == 0 {
            return err("top_k must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.smelu_beta > 0.0) {
            return err(format!("smelu_beta must be > 0, got {}", self.smelu_beta));
        }
        if self.attention_heads == 0 || self.embedding_dim() % self.attention_heads != 0 {
            return err(format!(
                "embedding width {} is not divisible by attention_heads {}",
                self.embedding_dim(),
                self.attention_heads
            ));
        }
        if self.ffn_multiplier == 0 {
            return err("ffn_multiplier must be >= 1".into());
        }
        if !(self.layer_norm_eps >= 0.0) {
            return err("layer_norm_eps must be >= 0".into());
        }
        Ok(())
    }
}
