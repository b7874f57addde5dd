//! Pretraining checkpoints.
//!
//! Layout (little-endian): magic `DIGM`, format version `u32`, then six
//! sections, each a `u64` byte length followed by its payload:
//!
//! 1. config as canonical `key=value` text
//! 2. online parameters
//! 3. target parameters
//! 4. Adam step count and moments
//! 5. epoch and momentum-step counters
//! 6. shuffle RNG state (seed, stream, word position)
//!
//! Tensor lists are a `u64` count, then per tensor rows, cols and the raw
//! `f64` values in row-major order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{Reader, Writer};
use crate::encoder::EncoderParams;

use super::optim::AdamState;
use super::{PretrainConfig, TrainError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DIGM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: PretrainConfig,
    pub online: EncoderParams,
    pub target: EncoderParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: u64,
    /// Momentum updates applied.
    pub step: u64,
    pub rng: RngState,
}

fn section(w: &mut Writer, fill: impl FnOnce(&mut Writer)) {
    let mut inner = Writer::new();
    fill(&mut inner);
    w.bytes(&inner.into_bytes());
}

fn load_params(config: &PretrainConfig, tensors: Vec<crate::tensor::Tensor>) -> Result<EncoderParams, TrainError> {
    let mut p = EncoderParams::zeros(config.encoder)?;
    p.load_tensors(tensors)?;
    Ok(p)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        section(&mut w, |s| s.raw(self.config.to_canonical_text().as_bytes()));
        section(&mut w, |s| s.tensors(self.online.tensors().into_iter()));
        section(&mut w, |s| s.tensors(self.target.tensors().into_iter()));
        section(&mut w, |s| {
            s.u64(self.adam.t);
            s.tensors(self.adam.m.iter());
            s.tensors(self.adam.v.iter());
        });
        section(&mut w, |s| {
            s.u64(self.epoch);
            s.u64(self.step);
        });
        section(&mut w, |s| {
            s.raw(&self.rng.seed);
            s.u64(self.rng.stream);
            s.u128(self.rng.word_pos);
        });
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader::new(bytes);
        if &r.raw::<4>().map_err(|_| TrainError::BadMagic("checkpoint"))? != CHECKPOINT_MAGIC {
            return Err(TrainError::BadMagic("checkpoint"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let text = std::str::from_utf8(r.bytes()?).map_err(|_| TrainError::Corrupt("config is not UTF-8".into()))?;
        let config = PretrainConfig::from_canonical_text(text)?;

        let mut s = Reader::new(r.bytes()?);
        let online = load_params(&config, s.tensors()?)?;
        s.finish()?;
        let mut s = Reader::new(r.bytes()?);
        let target = load_params(&config, s.tensors()?)?;
        s.finish()?;

        let mut s = Reader::new(r.bytes()?);
        let t = s.u64()?;
        let m = s.tensors()?;
        let v = s.tensors()?;
        s.finish()?;
        let shapes: Vec<[usize; 2]> = online.tensors().iter().map(|t| t.shape()).collect();
        for moments in [&m, &v] {
            if moments.iter().map(|t| t.shape()).ne(shapes.iter().copied()) {
                return Err(TrainError::Corrupt("optimizer moments do not match parameters".into()));
            }
        }

        let mut s = Reader::new(r.bytes()?);
        let epoch = s.u64()?;
        let step = s.u64()?;
        s.finish()?;

        let mut s = Reader::new(r.bytes()?);
        let rng = RngState {
            seed: s.raw()?,
            stream: s.u64()?,
            word_pos: s.u128()?,
        };
        s.finish()?;
        r.finish()?;

        Ok(Self {
            config,
            online,
            target,
            adam: AdamState { m, v, t },
            epoch,
            step,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::trainer::pretrain::Pretrainer;

    fn sample() -> Checkpoint {
        let cfg = PretrainConfig {
            encoder: EncoderConfig {
                layers: 2,
                hidden: 5,
                proj_hidden: 4,
                proj_dim: 3,
                ..EncoderConfig::default()
            },
            seed: 9,
            ..PretrainConfig::default()
        };
        let mut c = Pretrainer::new(cfg).unwrap().checkpoint();
        c.adam.t = 17;
        c.adam.m[0].set(0, 0, -0.25);
        c.epoch = 3;
        c.step = 40;
        c.rng.word_pos = 12345;
        c
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(&bytes[..4], b"DIGM");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(TrainError::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn corruption_is_an_error_not_a_panic() {
        let bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(b"NOPE"), Err(TrainError::BadMagic(_))));
        for cut in (0..bytes.len()).step_by(97) {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn rng_state_restores_the_sequence() {
        use rand::RngCore;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.set_stream(1);
        rng.next_u64();
        let state = RngState::capture(&rng);
        let mut copy = state.restore();
        assert_eq!(rng.next_u64(), copy.next_u64());
    }
}
