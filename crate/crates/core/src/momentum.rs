//! Online/target network pair with momentum tracking of the target.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoder::{EncoderConfig, EncoderError, EncoderParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentumError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("online and target parameters diverged in shape")]
    ShapeDrift,
    #[error("momentum must lie in [0, 1], got {0}")]
    InvalidMomentum(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPair {
    /// θ: trained by the optimizer.
    pub online: EncoderParams,
    /// ξ: changes only through [`NetworkPair::momentum_update`].
    pub target: EncoderParams,
    pub momentum: f64,
    pub step: u64,
}

impl NetworkPair {
    /// Random online parameters; the target is an exact copy.
    pub fn init(config: EncoderConfig, momentum: f64, seed: u64) -> Result<Self, MomentumError> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(MomentumError::InvalidMomentum(momentum));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = EncoderParams::init(config, &mut rng)?;
        Ok(Self {
            target: online.clone(),
            online,
            momentum,
            step: 0,
        })
    }

    /// `ξ ← m·ξ + (1 − m)·θ` elementwise, then advances the step counter.
    pub fn momentum_update(&mut self) -> Result<(), MomentumError> {
        let m = self.momentum;
        let online = self.online.tensors();
        let target = self.target.tensors_mut();
        if online.len() != target.len() {
            return Err(MomentumError::ShapeDrift);
        }
        for (xi, theta) in target.into_iter().zip(online) {
            if xi.shape() != theta.shape() {
                return Err(MomentumError::ShapeDrift);
            }
            for (x, &t) in xi.data_mut().iter_mut().zip(theta.data()) {
                *x = m * *x + (1.0 - m) * t;
            }
        }
        self.step += 1;
        Ok(())
    }

    /// Largest elementwise `|ξ − θ|`.
    pub fn max_gap(&self) -> f64 {
        self.online
            .tensors()
            .into_iter()
            .zip(self.target.tensors())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}
