//! Training configuration: desk-scale defaults, the two published
//! hyperparameter profiles, and key=value (de)serialization. Every key here
//! can be overridden by a same-named CLI flag.

use crate::error::{Error, Result};
use crate::kv;
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub adadelta_rho: f64,
    pub adadelta_epsilon: f64,
    pub max_epochs: usize,
    /// Validate every this many updates; 0 means once per epoch.
    pub validate_every: usize,
    pub seed: u64,
    /// Training/validation documents longer than this many word tokens are
    /// dropped; 0 disables the cap.
    pub max_doc_tokens: usize,
    pub char_mode: bool,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            model: ModelConfig {
                // 0 = take K from the vocabulary file.
                vocab_size: 0,
                embed_dim: 64,
                hidden_dim: 128,
                attention_dim: 128,
                bidirectional: true,
                two_level: true,
                distract_content: true,
                distract_attention: true,
            },
            batch_size: 32,
            adadelta_rho: 0.95,
            adadelta_epsilon: 1e-6,
            max_epochs: 10,
            validate_every: 0,
            seed: 42,
            max_doc_tokens: 2500,
            char_mode: false,
            clip_norm: 5.0,
        }
    }
}

impl TrainingConfig {
    /// English news profile: word tokens, 25k vocabulary, 120-dim
    /// embeddings, 600 hidden units with a bi-directional encoder,
    /// mini-batches of 64, documents capped at 2500 tokens.
    pub fn preset_cnn() -> TrainingConfig {
        let mut cfg = TrainingConfig::default();
        cfg.model.vocab_size = 25000;
        cfg.model.embed_dim = 120;
        cfg.model.hidden_dim = 600;
        cfg.model.attention_dim = 600;
        cfg.model.bidirectional = true;
        cfg.batch_size = 64;
        cfg.max_doc_tokens = 2500;
        cfg.char_mode = false;
        cfg
    }

    /// Short-text character profile: 4k character vocabulary, 500-dim
    /// embeddings and hidden units, mini-batches of 256.
    pub fn preset_lcsts() -> TrainingConfig {
        let mut cfg = TrainingConfig::default();
        cfg.model.vocab_size = 4000;
        cfg.model.embed_dim = 500;
        cfg.model.hidden_dim = 500;
        cfg.model.attention_dim = 500;
        cfg.model.bidirectional = true;
        cfg.batch_size = 256;
        cfg.max_doc_tokens = 0;
        cfg.char_mode = true;
        cfg
    }

    pub fn preset(name: &str) -> Result<TrainingConfig> {
        match name {
            "cnn" => Ok(TrainingConfig::preset_cnn()),
            "lcsts" => Ok(TrainingConfig::preset_lcsts()),
            _ => Err(Error::usage(format!(
                "unknown preset {name:?}; available presets: cnn, lcsts"
            ))),
        }
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut out = model_config_to_kv(&self.model);
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("batch_size", self.batch_size.to_string());
        push("adadelta_rho", self.adadelta_rho.to_string());
        push("adadelta_epsilon", self.adadelta_epsilon.to_string());
        push("max_epochs", self.max_epochs.to_string());
        push("validate_every", self.validate_every.to_string());
        push("seed", self.seed.to_string());
        push("max_doc_tokens", self.max_doc_tokens.to_string());
        push("char_mode", self.char_mode.to_string());
        push("clip_norm", self.clip_norm.to_string());
        out
    }

    /// Apply one key=value setting on top of the current values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_usize = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::usage(format!("{key}: expected an integer, got {v:?}")))
        };
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::usage(format!("{key}: expected a number, got {v:?}")))
        };
        match key {
            "vocab_size" => self.model.vocab_size = parse_usize(value)?,
            "embed_dim" => self.model.embed_dim = parse_usize(value)?,
            "hidden_dim" => self.model.hidden_dim = parse_usize(value)?,
            "attention_dim" => self.model.attention_dim = parse_usize(value)?,
            "bidirectional" => self.model.bidirectional = kv::parse_bool(value, key)?,
            "two_level" => self.model.two_level = kv::parse_bool(value, key)?,
            "distract_content" => self.model.distract_content = kv::parse_bool(value, key)?,
            "distract_attention" => self.model.distract_attention = kv::parse_bool(value, key)?,
            "batch_size" => self.batch_size = parse_usize(value)?,
            "adadelta_rho" => self.adadelta_rho = parse_f64(value)?,
            "adadelta_epsilon" => self.adadelta_epsilon = parse_f64(value)?,
            "max_epochs" => self.max_epochs = parse_usize(value)?,
            "validate_every" => self.validate_every = parse_usize(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::usage(format!("seed: expected an integer, got {value:?}")))?
            }
            "max_doc_tokens" => self.max_doc_tokens = parse_usize(value)?,
            "char_mode" => self.char_mode = kv::parse_bool(value, key)?,
            "clip_norm" => self.clip_norm = parse_f64(value)?,
            _ => return Err(Error::usage(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in kv::parse(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Check invariants after the vocabulary size has been resolved.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::usage("batch_size and max_epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.adadelta_rho) {
            return Err(Error::usage("adadelta_rho must be in [0, 1)"));
        }
        if self.adadelta_epsilon <= 0.0 {
            return Err(Error::usage("adadelta_epsilon must be positive"));
        }
        Ok(())
    }
}

pub fn model_config_to_kv(config: &ModelConfig) -> Vec<(String, String)> {
    vec![
        ("vocab_size".into(), config.vocab_size.to_string()),
        ("embed_dim".into(), config.embed_dim.to_string()),
        ("hidden_dim".into(), config.hidden_dim.to_string()),
        ("attention_dim".into(), config.attention_dim.to_string()),
        ("bidirectional".into(), config.bidirectional.to_string()),
        ("two_level".into(), config.two_level.to_string()),
        ("distract_content".into(), config.distract_content.to_string()),
        ("distract_attention".into(), config.distract_attention.to_string()),
    ]
}

pub fn model_config_from_kv(entries: &[(String, String)]) -> Result<ModelConfig> {
    let need = |key: &str| {
        kv::get(entries, key)
            .ok_or_else(|| Error::format(format!("checkpoint metadata is missing {key:?}")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        need(key)?
            .parse()
            .map_err(|_| Error::format(format!("bad integer for {key:?}")))
    };
    let parse_bool = |key: &str| -> Result<bool> { kv::parse_bool(need(key)?, key) };
    Ok(ModelConfig {
        vocab_size: parse_usize("vocab_size")?,
        embed_dim: parse_usize("embed_dim")?,
        hidden_dim: parse_usize("hidden_dim")?,
        attention_dim: parse_usize("attention_dim")?,
        bidirectional: parse_bool("bidirectional")?,
        two_level: parse_bool("two_level")?,
        distract_content: parse_bool("distract_content")?,
        distract_attention: parse_bool("distract_attention")?,
    })
}
