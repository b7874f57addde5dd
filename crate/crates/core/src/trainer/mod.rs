//! Pretraining, fine-tuning and their on-disk artifacts.

pub mod checkpoint;
pub mod finetune;
pub mod optim;
pub mod pretrain;

use thiserror::Error;

use crate::augment::{AugmentConfig, AugmentError};
use crate::autodiff::AutodiffError;
use crate::codec::DecodeError;
use crate::config::{parse_pairs, parse_value, render, ConfigError};
use crate::contrastive::{ContrastiveError, LossWeights};
use crate::encoder::{EncoderConfig, EncoderError, EncoderKind};
use crate::momentum::MomentumError;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use finetune::{
    embed_all, finetune, predict, FineTunedModel, FinetuneConfig, FinetuneHead, FinetuneOutcome, LabeledData, TaskKind, TaskSpec,
};
pub use optim::{adam_step, cosine_lr, AdamState};
pub use pretrain::{pretrain, EpochMetrics, Pretrainer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset has {got} molecules but the batch size is {batch}")]
    DatasetTooSmall { got: usize, batch: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{expected} tasks expected but labels have {got} columns")]
    LabelArityMismatch { expected: usize, got: usize },
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("not a {0} file")]
    BadMagic(&'static str),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Contrastive(#[from] ContrastiveError),
    #[error(transparent)]
    Momentum(#[from] MomentumError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<DecodeError> for TrainError {
    fn from(e: DecodeError) -> Self {
        TrainError::Corrupt(e.0)
    }
}

/// Pretraining knobs. `augment.seed` is ignored; view sampling is keyed
/// by `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub weights: LossWeights,
    pub momentum: f64,
    pub augment: AugmentConfig,
    pub encoder: EncoderConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr0: 0.001,
            weights: LossWeights::default(),
            momentum: 0.8,
            augment: AugmentConfig::default(),
            encoder: EncoderConfig::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    /// Keys of the canonical text form, in output order.
    pub const KEYS: [&'static str; 18] = [
        "epochs",
        "batch_size",
        "lr",
        "temperature",
        "alpha",
        "beta",
        "gamma",
        "momentum",
        "mask_ratio",
        "unidir_delete_ratio",
        "encoder",
        "num_layer",
        "diffusion_steps",
        "epsilon",
        "emb_dim",
        "proj_hidden",
        "proj_dim",
        "seed",
    ];

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1]");
        }
        self.weights.validate()?;
        self.augment.validate()?;
        self.encoder.validate()?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let e = &self.encoder;
        Some(match key {
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr" => self.lr0.to_string(),
            "temperature" => self.weights.tau.to_string(),
            "alpha" => self.weights.alpha.to_string(),
            "beta" => self.weights.beta.to_string(),
            "gamma" => self.weights.gamma.to_string(),
            "momentum" => self.momentum.to_string(),
            "mask_ratio" => self.augment.mask_ratio.to_string(),
            "unidir_delete_ratio" => self.augment.unidir_delete_ratio.to_string(),
            "encoder" => e.kind.as_str().to_string(),
            "num_layer" => e.layers.to_string(),
            "diffusion_steps" => e.diffusion_steps.to_string(),
            "epsilon" => e.epsilon.to_string(),
            "emb_dim" => e.hidden.to_string(),
            "proj_hidden" => e.proj_hidden.to_string(),
            "proj_dim" => e.proj_dim.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// Sets one key. Returns `Ok(false)` if the key is not a pretraining key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        let e = &mut self.encoder;
        match key {
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr" => self.lr0 = parse_value(key, value)?,
            "temperature" => self.weights.tau = parse_value(key, value)?,
            "alpha" => self.weights.alpha = parse_value(key, value)?,
            "beta" => self.weights.beta = parse_value(key, value)?,
            "gamma" => self.weights.gamma = parse_value(key, value)?,
            "momentum" => self.momentum = parse_value(key, value)?,
            "mask_ratio" => self.augment.mask_ratio = parse_value(key, value)?,
            "unidir_delete_ratio" => self.augment.unidir_delete_ratio = parse_value(key, value)?,
            "encoder" => {
                e.kind = EncoderKind::parse(value).ok_or_else(|| ConfigError::InvalidValue {
                    key: key.to_string(),
                    value: value.to_string(),
                })?
            }
            "num_layer" => e.layers = parse_value(key, value)?,
            "diffusion_steps" => e.diffusion_steps = parse_value(key, value)?,
            "epsilon" => e.epsilon = parse_value(key, value)?,
            "emb_dim" => e.hidden = parse_value(key, value)?,
            "proj_hidden" => e.proj_hidden = parse_value(key, value)?,
            "proj_dim" => e.proj_dim = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_canonical_text(&self) -> String {
        let pairs: Vec<(&str, String)> = Self::KEYS
            .iter()
            .map(|&k| (k, self.get(k).expect("every listed key is readable")))
            .collect();
        render(&pairs)
    }

    /// Parses a document with every key present, as written by
    /// [`PretrainConfig::to_canonical_text`].
    pub fn from_canonical_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let pairs = parse_pairs(text)?;
        for (k, v) in &pairs {
            if !cfg.set(k, v)? {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        if let Some(missing) = Self::KEYS.iter().find(|k| !pairs.iter().any(|(p, _)| p == *k)) {
            return Err(ConfigError::InvalidValue {
                key: missing.to_string(),
                value: "<missing>".into(),
            });
        }
        Ok(cfg)
    }

    /// Augmentation settings with the seed derived from `self.seed`.
    pub fn view_augment(&self) -> AugmentConfig {
        AugmentConfig {
            seed: self.seed ^ 0x5DEE_CE66_D1CE_4E5B,
            ..self.augment
        }
    }
}
