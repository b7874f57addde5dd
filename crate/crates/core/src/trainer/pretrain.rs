//! The contrastive pretraining loop.
//!
//! Each molecule's two online passes share one tape; the four projected
//! views of the batch meet on a small loss tape whose leaves are the
//! stacked online projections. The gradient rows of those leaves then
//! seed each molecule's tape, and parameter gradients are summed in
//! batch order so results do not depend on thread scheduling.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::make_pair;
use crate::autodiff::{Tape, Var};
use crate::contrastive::{joint_loss, LossComponents};
use crate::encoder::{encode, encode_on_tape, EncoderVars};
use crate::graph::MolGraph;
use crate::momentum::NetworkPair;
use crate::tensor::Tensor;

use super::checkpoint::{Checkpoint, RngState};
use super::optim::{adam_step, cosine_lr, AdamState};
use super::{PretrainConfig, TrainError};

/// Mean loss components over one epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub loss: LossComponents,
    pub lr: f64,
    pub batches: usize,
}

pub const METRICS_HEADER: &str = "epoch,L_joint,L_GI,L_EI,L_MI,lr";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{},{},{},{}",
            self.epoch, l.joint, l.graph_interaction, l.encoder_interaction, l.multi_interaction, self.lr
        )
    }
}

pub fn write_metrics_csv<W: Write>(out: &mut W, metrics: &[EpochMetrics]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(out, "{}", m.csv_row())?;
    }
    Ok(())
}

/// Loss and summed online-parameter gradients for one batch.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: LossComponents,
    pub grads: Vec<Tensor>,
}

struct MoleculePass {
    tape: Tape,
    vars: EncoderVars,
    /// Both online projections stacked, 2 × D_z.
    z_online: Var,
    z_target: [Tensor; 2],
}

#[derive(Debug, Clone)]
pub struct Pretrainer {
    config: PretrainConfig,
    pair: NetworkPair,
    adam: AdamState,
    epoch: usize,
    shuffle_rng: ChaCha8Rng,
}

impl Pretrainer {
    pub fn new(config: PretrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let pair = NetworkPair::init(config.encoder, config.momentum, config.seed)?;
        let adam = AdamState::for_params(pair.online.tensors());
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle_rng.set_stream(1);
        Ok(Self {
            config,
            pair,
            adam,
            epoch: 0,
            shuffle_rng,
        })
    }

    /// Resumes from a checkpoint; further epochs continue its schedule.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, TrainError> {
        ckpt.config.validate()?;
        let pair = NetworkPair {
            online: ckpt.online,
            target: ckpt.target,
            momentum: ckpt.config.momentum,
            step: ckpt.step,
        };
        Ok(Self {
            config: ckpt.config,
            pair,
            adam: ckpt.adam,
            epoch: ckpt.epoch as usize,
            shuffle_rng: ckpt.rng.restore(),
        })
    }

    pub fn config(&self) -> &PretrainConfig {
        &self.config
    }

    pub fn pair(&self) -> &NetworkPair {
        &self.pair
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Changes the planned epoch count. The learning-rate schedule of the
    /// remaining epochs follows the new total.
    pub fn set_total_epochs(&mut self, epochs: usize) -> Result<(), TrainError> {
        if epochs < self.epoch.max(1) {
            return Err(TrainError::InvalidConfig(format!(
                "epochs must be at least the {} already completed",
                self.epoch.max(1)
            )));
        }
        self.config.epochs = epochs;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config,
            online: self.pair.online.clone(),
            target: self.pair.target.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch as u64,
            step: self.pair.step,
            rng: RngState::capture(&self.shuffle_rng),
        }
    }

    /// Forward and backward for the molecules `indices` of `dataset`.
    /// View sampling uses stream `epoch·|dataset| + index`. Nothing is
    /// updated.
    pub fn batch_gradients(
        &self,
        dataset: &[MolGraph],
        indices: &[usize],
        epoch: usize,
    ) -> Result<BatchGradients, TrainError> {
        let aug = self.config.view_augment();
        let n = dataset.len() as u64;
        let online = &self.pair.online;
        let target = &self.pair.target;

        let passes: Vec<MoleculePass> = indices
            .par_iter()
            .map(|&i| -> Result<MoleculePass, TrainError> {
                let stream = (epoch as u64).wrapping_mul(n).wrapping_add(i as u64);
                let (g1, g2) = make_pair(&dataset[i], &aug, stream);
                let mut tape = Tape::new();
                let vars = online.register(&mut tape, true);
                let e1 = encode_on_tape(&mut tape, &g1, online, &vars)?;
                let e2 = encode_on_tape(&mut tape, &g2, online, &vars)?;
                let z_online = tape.concat_rows(&[e1.z, e2.z])?;
                let (_, x1) = encode(&g1, target)?;
                let (_, x2) = encode(&g2, target)?;
                Ok(MoleculePass {
                    tape,
                    vars,
                    z_online,
                    z_target: [x1, x2],
                })
            })
            .collect::<Result<_, _>>()?;

        let stack = |f: &dyn Fn(&MoleculePass) -> &[f64]| -> Tensor {
            Tensor::from_rows(&passes.iter().map(f).collect::<Vec<_>>())
        };
        let t1 = stack(&|p| p.tape.value(p.z_online).row(0));
        let t2 = stack(&|p| p.tape.value(p.z_online).row(1));
        let x1 = stack(&|p| p.z_target[0].data());
        let x2 = stack(&|p| p.z_target[1].data());

        let mut tape = Tape::new();
        let (t1, t2) = (tape.leaf(t1), tape.leaf(t2));
        let (x1, x2) = (tape.constant(x1), tape.constant(x2));
        let vars = joint_loss(&mut tape, t1, t2, x1, x2, &self.config.weights)?;
        let loss = vars.values(&tape);
        let grads = tape.backward(vars.joint)?;
        let (d1, d2) = (grads.get(t1), grads.get(t2));

        let per_molecule: Vec<Vec<Tensor>> = passes
            .par_iter()
            .enumerate()
            .map(|(b, p)| -> Result<Vec<Tensor>, TrainError> {
                let seed = Tensor::from_rows(&[d1.row(b), d2.row(b)]);
                let g = p.tape.backward_with_seed(p.z_online, &seed)?;
                Ok(p.vars.flat.iter().map(|&v| g.get(v)).collect())
            })
            .collect::<Result<_, _>>()?;

        let mut total: Vec<Tensor> = online.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        for grads in &per_molecule {
            for (acc, g) in total.iter_mut().zip(grads) {
                acc.axpy(1.0, g);
            }
        }
        Ok(BatchGradients { loss, grads: total })
    }

    /// Adam on the online parameters only.
    pub fn optimizer_step(&mut self, grads: &[Tensor], lr: f64) -> Result<(), TrainError> {
        let mut params = self.pair.online.tensors_mut();
        adam_step(&mut params, grads, &mut self.adam, lr)
    }

    pub fn momentum_update(&mut self) -> Result<(), TrainError> {
        Ok(self.pair.momentum_update()?)
    }

    /// One full epoch: shuffle, drop the trailing partial batch, and for
    /// each batch run gradients → Adam → momentum update.
    pub fn run_epoch(&mut self, dataset: &[MolGraph]) -> Result<EpochMetrics, TrainError> {
        let b = self.config.batch_size;
        if dataset.len() < b {
            return Err(TrainError::DatasetTooSmall {
                got: dataset.len(),
                batch: b,
            });
        }
        let epoch = self.epoch;
        let lr = cosine_lr(self.config.lr0, epoch, self.config.epochs);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut self.shuffle_rng);

        let mut sum = [0.0f64; 4];
        let mut batches = 0;
        for (bi, chunk) in order.chunks_exact(b).enumerate() {
            let g = self.batch_gradients(dataset, chunk, epoch)?;
            let l = g.loss;
            let parts = [l.joint, l.graph_interaction, l.encoder_interaction, l.multi_interaction];
            if parts.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: bi,
                    detail: format!("{l:?}"),
                });
            }
            if g.grads.iter().any(|t| !t.is_finite()) {
                return Err(TrainError::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: bi,
                    detail: "non-finite gradient".into(),
                });
            }
            self.optimizer_step(&g.grads, lr)?;
            self.momentum_update()?;
            for (s, v) in sum.iter_mut().zip(parts) {
                *s += v;
            }
            batches += 1;
        }
        self.epoch += 1;
        let k = batches as f64;
        let metrics = EpochMetrics {
            epoch: self.epoch,
            loss: LossComponents {
                joint: sum[0] / k,
                graph_interaction: sum[1] / k,
                encoder_interaction: sum[2] / k,
                multi_interaction: sum[3] / k,
            },
            lr,
            batches,
        };
        log::info!(
            "epoch {} L_joint={:.4} L_GI={:.4} L_EI={:.4} L_MI={:.4} lr={:.2e}",
            metrics.epoch,
            metrics.loss.joint,
            metrics.loss.graph_interaction,
            metrics.loss.encoder_interaction,
            metrics.loss.multi_interaction,
            lr
        );
        Ok(metrics)
    }

    /// Runs the remaining epochs of the schedule.
    pub fn run(&mut self, dataset: &[MolGraph]) -> Result<Vec<EpochMetrics>, TrainError> {
        let mut out = Vec::new();
        while self.epoch < self.config.epochs {
            out.push(self.run_epoch(dataset)?);
        }
        Ok(out)
    }
}

/// Full pretraining run from a fresh initialization.
pub fn pretrain(dataset: &[MolGraph], config: PretrainConfig) -> Result<(Checkpoint, Vec<EpochMetrics>), TrainError> {
    let mut trainer = Pretrainer::new(config)?;
    if dataset.len() < config.batch_size {
        return Err(TrainError::DatasetTooSmall {
            got: dataset.len(),
            batch: config.batch_size,
        });
    }
    let metrics = trainer.run(dataset)?;
    Ok((trainer.checkpoint(), metrics))
}
