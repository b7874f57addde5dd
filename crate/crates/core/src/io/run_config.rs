//! Run configuration files: flat `key=value`, pretraining and
//! fine-tuning knobs in one namespace.

use std::path::Path;

use crate::config::{parse_pairs, render, ConfigError};
use crate::trainer::{FinetuneConfig, PretrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        PretrainConfig::KEYS.into_iter().chain(FinetuneConfig::KEYS)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.pretrain.get(key).or_else(|| self.finetune.get(key))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if self.pretrain.set(key, value)? || self.finetune.set(key, value)? {
            if key == "seed" {
                self.finetune.seed = self.pretrain.seed;
            }
            Ok(())
        } else {
            Err(ConfigError::UnknownKey(key.to_string()))
        }
    }

    /// Parses a document; absent keys keep their defaults and are
    /// returned (and logged).
    pub fn parse(text: &str) -> Result<(Self, Vec<&'static str>), ConfigError> {
        let mut cfg = Self::default();
        let pairs = parse_pairs(text)?;
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        let defaulted: Vec<&'static str> = Self::keys().filter(|k| !pairs.iter().any(|(p, _)| p == k)).collect();
        for k in &defaulted {
            log::info!("config: {k} defaults to {}", cfg.get(k).unwrap_or_default());
        }
        Ok((cfg, defaulted))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<&'static str>), Box<dyn std::error::Error + Send + Sync>> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse(&text)?)
    }

    /// Every key in fixed order.
    pub fn to_canonical_text(&self) -> String {
        let pairs: Vec<(&str, String)> = Self::keys()
            .map(|k| (k, self.get(k).expect("listed keys are readable")))
            .collect();
        render(&pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_defaults() {
        let (cfg, defaulted) = RunConfig::parse("epochs=7\ndropout=0.3\nseed=5\n").unwrap();
        assert_eq!(cfg.pretrain.epochs, 7);
        assert_eq!(cfg.finetune.dropout, 0.3);
        assert_eq!(cfg.finetune.seed, 5);
        assert!(defaulted.contains(&"lr"));
        assert!(!defaulted.contains(&"epochs"));
        let text = cfg.to_canonical_text();
        let (back, none) = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(none.is_empty());
        assert_eq!(back.to_canonical_text(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert_eq!(RunConfig::parse("learning_rate=0.1"), Err(ConfigError::UnknownKey("learning_rate".into())));
        assert!(RunConfig::parse("epochs=many").is_err());
    }
}
