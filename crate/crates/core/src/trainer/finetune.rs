//! Supervised fine-tuning of a two-layer head on a frozen encoder.
//!
//! The encoder never sees a gradient, so graph embeddings are computed
//! once up front. Inputs to the head are standardized with training-set
//! statistics; regression targets are standardized the same way and
//! mapped back at prediction time. Dropout sits after the hidden layer.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{sigmoid, Tape, Var};
use crate::codec::{Reader, Writer};
use crate::config::{parse_pairs, parse_value, ConfigError};
use crate::encoder::{encode, DenseLayer, DenseVars, EncoderConfig, EncoderParams};
use crate::graph::MolGraph;
use crate::metrics::{evaluate, MetricKind};
use crate::split::Split;
use crate::tensor::Tensor;

use super::optim::{adam_step, AdamState};
use super::{PretrainConfig, TrainError};

pub const MODEL_MAGIC: &[u8; 4] = b"DIGF";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Independent binary tasks, one sigmoid each.
    Classification,
    Regression,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classification" => Some(TaskKind::Classification),
            "regression" => Some(TaskKind::Regression),
            _ => None,
        }
    }

    /// Metric used for model selection.
    pub fn selection_metric(self) -> MetricKind {
        match self {
            TaskKind::Classification => MetricKind::RocAuc,
            TaskKind::Regression => MetricKind::Rmse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 0.001,
            hidden: 64,
            dropout: 0.0,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    /// Keys in run-config files. `seed` is shared with pretraining.
    pub const KEYS: [&'static str; 5] = ["finetune_epochs", "finetune_batch_size", "finetune_lr", "head_hidden", "dropout"];

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("finetune_batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("finetune_lr must be positive");
        }
        if self.hidden == 0 {
            return bad("head_hidden must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "finetune_epochs" => self.epochs.to_string(),
            "finetune_batch_size" => self.batch_size.to_string(),
            "finetune_lr" => self.lr.to_string(),
            "head_hidden" => self.hidden.to_string(),
            "dropout" => self.dropout.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "finetune_epochs" => self.epochs = parse_value(key, value)?,
            "finetune_batch_size" => self.batch_size = parse_value(key, value)?,
            "finetune_lr" => self.lr = parse_value(key, value)?,
            "head_hidden" => self.hidden = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Labels for a set of molecules: `labels[i][t]`, `None` where missing.
#[derive(Debug, Clone, Copy)]
pub struct LabeledData<'a> {
    pub graphs: &'a [MolGraph],
    pub labels: &'a [Vec<Option<f64>>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneHead {
    pub kind: TaskKind,
    pub input_mean: Tensor,
    pub input_scale: Tensor,
    pub hidden: DenseLayer,
    pub output: DenseLayer,
    /// Regression target standardization; zero and one for classification.
    pub target_mean: Tensor,
    pub target_scale: Tensor,
    pub dropout: f64,
}

impl FinetuneHead {
    fn trainable(&self) -> [&Tensor; 4] {
        [&self.hidden.weight, &self.hidden.bias, &self.output.weight, &self.output.bias]
    }

    fn trainable_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }

    fn all_tensors(&self) -> [&Tensor; 8] {
        [
            &self.input_mean,
            &self.input_scale,
            &self.hidden.weight,
            &self.hidden.bias,
            &self.output.weight,
            &self.output.bias,
            &self.target_mean,
            &self.target_scale,
        ]
    }

    fn standardize(&self, h: &Tensor) -> Tensor {
        let mut x = h.clone();
        for r in 0..x.rows() {
            for (c, v) in x.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.input_mean.get(0, c)) / self.input_scale.get(0, c);
            }
        }
        x
    }

    /// Raw outputs (logits or standardized values) on `tape`.
    fn forward(&self, tape: &mut Tape, x: Var, vars: &[Var; 4], dropout_mask: Option<Var>) -> Result<Var, TrainError> {
        let a = self.hidden.forward(
            tape,
            x,
            &DenseVars {
                weight: vars[0],
                bias: vars[1],
            },
        )?;
        let mut a = tape.relu(a);
        if let Some(mask) = dropout_mask {
            a = tape.mul_elementwise(a, mask)?;
        }
        Ok(self.output.forward(
            tape,
            a,
            &DenseVars {
                weight: vars[2],
                bias: vars[3],
            },
        )?)
    }

    /// Task-space outputs for graph embeddings `h` (N × D).
    pub fn predict_embeddings(&self, h: &Tensor) -> Result<Tensor, TrainError> {
        let mut tape = Tape::new();
        let x = tape.constant(self.standardize(h));
        let vars = self.trainable().map(|t| tape.constant(t.clone()));
        let out = self.forward(&mut tape, x, &vars, None)?;
        let raw = tape.value(out);
        Ok(match self.kind {
            TaskKind::Classification => raw.map(sigmoid),
            TaskKind::Regression => {
                let mut y = raw.clone();
                for r in 0..y.rows() {
                    for (t, v) in y.row_mut(r).iter_mut().enumerate() {
                        *v = *v * self.target_scale.get(0, t) + self.target_mean.get(0, t);
                    }
                }
                y
            }
        })
    }
}

/// Frozen encoder plus trained head.
#[derive(Debug, Clone, PartialEq)]
pub struct FineTunedModel {
    pub encoder: EncoderParams,
    pub head: FinetuneHead,
    pub tasks: TaskSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub model: FineTunedModel,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub history: Vec<FinetuneEpoch>,
}

/// Graph embeddings for every molecule, one row each.
pub fn embed_all(encoder: &EncoderParams, graphs: &[MolGraph]) -> Result<Tensor, TrainError> {
    let rows: Vec<Tensor> = graphs
        .par_iter()
        .map(|g| encode(g, encoder).map(|(h, _)| h))
        .collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Ok(Tensor::zeros(0, encoder.embedding_dim()));
    }
    Ok(Tensor::concat_rows(&rows.iter().collect::<Vec<_>>()).expect("equal widths"))
}

fn column_stats(rows: &[&[f64]], cols: usize) -> (Tensor, Tensor) {
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; cols];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; cols];
    for r in rows {
        for (c, v) in r.iter().enumerate() {
            var[c] += (v - mean[c]).powi(2) / n;
        }
    }
    let scale: Vec<f64> = var.iter().map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 }).collect();
    (Tensor::row_vector(&mean), Tensor::row_vector(&scale))
}

fn gather(m: &Tensor, idx: &[usize]) -> Tensor {
    Tensor::from_rows(&idx.iter().map(|&i| m.row(i)).collect::<Vec<_>>())
}

/// Trains a fresh head on the `split.train` molecules. The validation
/// split selects the epoch whose head is returned (ties go to the later
/// epoch); with no usable validation score the last epoch wins.
pub fn finetune(
    encoder: &EncoderParams,
    data: LabeledData<'_>,
    tasks: &TaskSpec,
    split: &Split,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome, TrainError> {
    let h = embed_all(encoder, data.graphs)?;
    finetune_embeddings(encoder, &h, data.labels, tasks, split, cfg)
}

/// [`finetune`] on precomputed embeddings `h` (one row per molecule).
pub fn finetune_embeddings(
    encoder: &EncoderParams,
    h: &Tensor,
    labels: &[Vec<Option<f64>>],
    tasks: &TaskSpec,
    split: &Split,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome, TrainError> {
    cfg.validate()?;
    let t = tasks.names.len();
    if t == 0 {
        return Err(TrainError::LabelArityMismatch { expected: 1, got: 0 });
    }
    if h.rows() != labels.len() {
        return Err(TrainError::ShapeMismatch(format!("{} embeddings, {} label rows", h.rows(), labels.len())));
    }
    if let Some(bad) = labels.iter().find(|l| l.len() != t) {
        return Err(TrainError::LabelArityMismatch {
            expected: t,
            got: bad.len(),
        });
    }
    if split.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }

    let d = h.cols();
    let train_rows: Vec<&[f64]> = split.train.iter().map(|&i| h.row(i)).collect();
    let (input_mean, input_scale) = column_stats(&train_rows, d);

    let (target_mean, target_scale) = match tasks.kind {
        TaskKind::Classification => (Tensor::zeros(1, t), Tensor::filled(1, t, 1.0)),
        TaskKind::Regression => {
            let mut mean = vec![0.0; t];
            let mut scale = vec![1.0; t];
            for task in 0..t {
                let ys: Vec<f64> = split.train.iter().filter_map(|&i| labels[i][task]).collect();
                if ys.is_empty() {
                    continue;
                }
                let m = ys.iter().sum::<f64>() / ys.len() as f64;
                let sd = (ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
                mean[task] = m;
                scale[task] = if sd > 1e-8 { sd } else { 1.0 };
            }
            (Tensor::row_vector(&mean), Tensor::row_vector(&scale))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = FinetuneHead {
        kind: tasks.kind,
        input_mean,
        input_scale,
        hidden: DenseLayer::init(d, cfg.hidden, &mut rng),
        output: DenseLayer::init(cfg.hidden, t, &mut rng),
        target_mean,
        target_scale,
        dropout: cfg.dropout,
    };
    let x_all = head.standardize(h);

    // Standardized targets and presence masks.
    let mut y_all = Tensor::zeros(labels.len(), t);
    let mut mask_all = Tensor::zeros(labels.len(), t);
    for (i, row) in labels.iter().enumerate() {
        for (task, v) in row.iter().enumerate() {
            if let Some(v) = v {
                y_all.set(i, task, (v - head.target_mean.get(0, task)) / head.target_scale.get(0, task));
                mask_all.set(i, task, 1.0);
            }
        }
    }

    let metric = tasks.kind.selection_metric();
    let valid_labels: Vec<Vec<Option<f64>>> = split.valid.iter().map(|&i| labels[i].clone()).collect();
    let valid_h = gather(h, &split.valid);

    let mut adam = AdamState::for_params(head.trainable());
    let mut best: Option<(f64, usize, FinetuneHead)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order = split.train.clone();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let mask = gather(&mask_all, chunk);
            let present = mask.sum();
            if present == 0.0 {
                continue;
            }
            let mut tape = Tape::new();
            let x = tape.constant(gather(&x_all, chunk));
            let y = tape.constant(gather(&y_all, chunk));
            let m = tape.constant(mask);
            let vars = head.trainable().map(|p| tape.leaf(p.clone()));
            let drop = if cfg.dropout > 0.0 {
                let keep = 1.0 - cfg.dropout;
                let mut dm = Tensor::zeros(chunk.len(), cfg.hidden);
                for v in dm.data_mut() {
                    *v = if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 };
                }
                Some(tape.constant(dm))
            } else {
                None
            };
            let out = head.forward(&mut tape, x, &vars, drop)?;
            let per_entry = match tasks.kind {
                // Binary cross-entropy on logits: softplus(o) − y·o.
                TaskKind::Classification => {
                    let sp = tape.softplus(out);
                    let yo = tape.mul_elementwise(out, y)?;
                    tape.sub(sp, yo)?
                }
                TaskKind::Regression => {
                    let diff = tape.sub(out, y)?;
                    tape.mul_elementwise(diff, diff)?
                }
            };
            let masked = tape.mul_elementwise(per_entry, m)?;
            let total = tape.sum(masked);
            let loss = tape.scale(total, 1.0 / present);
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batches,
                    detail: format!("fine-tune loss {value}"),
                });
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();
            adam_step(&mut head.trainable_mut(), &g, &mut adam, cfg.lr)?;
            loss_sum += value;
            batches += 1;
        }

        let valid_metric = if split.valid.is_empty() {
            None
        } else {
            let preds = head.predict_embeddings(&valid_h)?;
            let rows: Vec<Vec<f64>> = (0..preds.rows()).map(|r| preds.row(r).to_vec()).collect();
            evaluate(metric, &tasks.names, &rows, &valid_labels)
                .ok()
                .and_then(|r| r.macro_average)
        };
        history.push(FinetuneEpoch {
            epoch,
            train_loss: if batches > 0 { loss_sum / batches as f64 } else { 0.0 },
            valid_metric,
        });

        let score = valid_metric.map(|v| if metric.higher_is_better() { v } else { -v });
        let improved = match (&best, score) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some((b, _, _)), Some(s)) => s >= *b,
        };
        if improved {
            best = Some((score.expect("checked"), epoch, head.clone()));
        }
    }

    let (best_epoch, head) = match best {
        Some((_, e, h)) => (e, h),
        None => (cfg.epochs, head),
    };
    Ok(FinetuneOutcome {
        model: FineTunedModel {
            encoder: encoder.clone(),
            head,
            tasks: tasks.clone(),
        },
        best_epoch,
        history,
    })
}

/// Per-task outputs for each graph: probabilities for classification,
/// values in label units for regression.
pub fn predict(model: &FineTunedModel, graphs: &[MolGraph]) -> Result<Vec<Vec<f64>>, TrainError> {
    let h = embed_all(&model.encoder, graphs)?;
    let out = model.head.predict_embeddings(&h)?;
    Ok((0..out.rows()).map(|r| out.row(r).to_vec()).collect())
}

const ENCODER_KEYS: [&str; 7] = [
    "encoder",
    "num_layer",
    "diffusion_steps",
    "epsilon",
    "emb_dim",
    "proj_hidden",
    "proj_dim",
];

impl FineTunedModel {
    /// Layout: magic `DIGF`, version `u32`, then length-prefixed sections:
    /// header text (task kind, dropout, encoder shape), task names,
    /// encoder tensors, head tensors.
    pub fn to_bytes(&self) -> Vec<u8> {
        let shell = PretrainConfig {
            encoder: self.encoder.config,
            ..PretrainConfig::default()
        };
        let mut header = format!("task={}\ndropout={}\n", self.tasks.kind.as_str(), self.head.dropout);
        for k in ENCODER_KEYS {
            header.push_str(&format!("{k}={}\n", shell.get(k).expect("encoder key")));
        }
        let mut w = Writer::new();
        w.raw(MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        w.str(&header);
        let mut names = Writer::new();
        names.u64(self.tasks.names.len() as u64);
        for n in &self.tasks.names {
            names.str(n);
        }
        w.bytes(&names.into_bytes());
        let mut enc = Writer::new();
        enc.tensors(self.encoder.tensors().into_iter());
        w.bytes(&enc.into_bytes());
        let mut head = Writer::new();
        head.tensors(self.head.all_tensors().into_iter());
        w.bytes(&head.into_bytes());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader::new(bytes);
        if &r.raw::<4>().map_err(|_| TrainError::BadMagic("model"))? != MODEL_MAGIC {
            return Err(TrainError::BadMagic("model"));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(TrainError::VersionMismatch {
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let mut shell = PretrainConfig::default();
        let mut kind = None;
        let mut dropout = 0.0;
        for (k, v) in parse_pairs(r.str()?)? {
            match k.as_str() {
                "task" => {
                    kind = Some(TaskKind::parse(&v).ok_or(ConfigError::InvalidValue { key: k.clone(), value: v })?)
                }
                "dropout" => dropout = parse_value(&k, &v)?,
                _ if ENCODER_KEYS.contains(&k.as_str()) => {
                    shell.set(&k, &v)?;
                }
                _ => return Err(ConfigError::UnknownKey(k).into()),
            }
        }
        let kind = kind.ok_or_else(|| TrainError::Corrupt("model header lacks task".into()))?;
        let config: EncoderConfig = shell.encoder;

        let mut s = Reader::new(r.bytes()?);
        let n = s.u64()? as usize;
        let mut names = Vec::new();
        for _ in 0..n {
            names.push(s.str()?.to_string());
        }
        s.finish()?;

        let mut s = Reader::new(r.bytes()?);
        let mut encoder = EncoderParams::zeros(config)?;
        encoder.load_tensors(s.tensors()?)?;
        s.finish()?;

        let mut s = Reader::new(r.bytes()?);
        let ts = s.tensors()?;
        s.finish()?;
        r.finish()?;
        let [input_mean, input_scale, hw, hb, ow, ob, target_mean, target_scale]: [Tensor; 8] =
            ts.try_into().map_err(|_| TrainError::Corrupt("head needs 8 tensors".into()))?;
        let d = encoder.embedding_dim();
        let t = names.len();
        let hidden = hw.cols();
        let shapes_ok = input_mean.shape() == [1, d]
            && input_scale.shape() == [1, d]
            && hw.rows() == d
            && hb.shape() == [1, hidden]
            && ow.shape() == [hidden, t]
            && ob.shape() == [1, t]
            && target_mean.shape() == [1, t]
            && target_scale.shape() == [1, t];
        if !shapes_ok {
            return Err(TrainError::Corrupt("head tensor shapes disagree".into()));
        }
        Ok(Self {
            encoder,
            head: FinetuneHead {
                kind,
                input_mean,
                input_scale,
                hidden: DenseLayer { weight: hw, bias: hb },
                output: DenseLayer { weight: ow, bias: ob },
                target_mean,
                target_scale,
                dropout,
            },
            tasks: TaskSpec { kind, names },
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
    use crate::smiles::parse_smiles;
    use rand::SeedableRng;

    fn encoder() -> EncoderParams {
        let cfg = EncoderConfig {
            layers: 2,
            hidden: 8,
            proj_hidden: 8,
            proj_dim: 4,
            ..EncoderConfig::default()
        };
        EncoderParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    fn graphs() -> Vec<MolGraph> {
        ["CCO", "CCC", "c1ccccc1O", "c1ccccc1", "OCCO", "CCCC", "CC(=O)O", "CCN"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect()
    }

    fn oxygen_labels(smiles: &[&str]) -> Vec<Vec<Option<f64>>> {
        smiles
            .iter()
            .map(|s| vec![Some(if s.contains('O') { 1.0 } else { 0.0 })])
            .collect()
    }

    fn spec(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            kind,
            names: vec!["y".into()],
        }
    }

    fn all_train(n: usize) -> Split {
        Split {
            train: (0..n).collect(),
            ..Split::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_head() {
        let enc = encoder();
        let g = graphs();
        let labels = vec![vec![Some(1.0)]; g.len()];
        let cfg = FinetuneConfig {
            epochs: 0,
            seed: 4,
            ..Default::default()
        };
        let out = finetune(&enc, LabeledData { graphs: &g, labels: &labels }, &spec(TaskKind::Classification), &all_train(g.len()), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(out.model.head.hidden, DenseLayer::init(8, 64, &mut rng));
        assert_eq!(out.model.encoder, enc);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn encoder_is_untouched() {
        let enc = encoder();
        let before = enc.clone();
        let g = graphs();
        let smiles = ["CCO", "CCC", "c1ccccc1O", "c1ccccc1", "OCCO", "CCCC", "CC(=O)O", "CCN"];
        let labels = oxygen_labels(&smiles);
        let cfg = FinetuneConfig {
            epochs: 20,
            ..Default::default()
        };
        let out = finetune(&enc, LabeledData { graphs: &g, labels: &labels }, &spec(TaskKind::Classification), &all_train(g.len()), &cfg).unwrap();
        let bits = |p: &EncoderParams| -> Vec<u64> { p.tensors().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect() };
        assert_eq!(bits(&out.model.encoder), bits(&before));
        assert_eq!(bits(&enc), bits(&before));
        assert!(out.history.last().unwrap().train_loss < out.history[0].train_loss);
    }

    #[test]
    fn constant_regression_is_learned() {
        let enc = encoder();
        let g = graphs();
        let labels = vec![vec![Some(2.5)]; g.len()];
        let cfg = FinetuneConfig {
            epochs: 200,
            lr: 0.01,
            ..Default::default()
        };
        let out = finetune(&enc, LabeledData { graphs: &g, labels: &labels }, &spec(TaskKind::Regression), &all_train(g.len()), &cfg).unwrap();
        let preds = predict(&out.model, &g).unwrap();
        let flat: Vec<f64> = preds.iter().map(|p| p[0]).collect();
        let rmse = crate::metrics::rmse(&flat, &[2.5; 8]).unwrap();
        assert!(rmse < 0.05, "rmse {rmse}");
    }

    #[test]
    fn arity_and_split_errors() {
        let enc = encoder();
        let g = graphs();
        let labels = vec![vec![Some(1.0), None]; g.len()];
        let data = LabeledData { graphs: &g, labels: &labels };
        let cfg = FinetuneConfig::default();
        assert!(matches!(
            finetune(&enc, data, &spec(TaskKind::Classification), &all_train(8), &cfg),
            Err(TrainError::LabelArityMismatch { expected: 1, got: 2 })
        ));
        let labels = vec![vec![Some(1.0)]; g.len()];
        let data = LabeledData { graphs: &g, labels: &labels };
        assert!(matches!(
            finetune(&enc, data, &spec(TaskKind::Classification), &Split::default(), &cfg),
            Err(TrainError::EmptySplit("train"))
        ));
    }

    #[test]
    fn predictions_are_probabilities_and_stable() {
        let enc = encoder();
        let g = graphs();
        let smiles = ["CCO", "CCC", "c1ccccc1O", "c1ccccc1", "OCCO", "CCCC", "CC(=O)O", "CCN"];
        let labels = oxygen_labels(&smiles);
        let cfg = FinetuneConfig {
            epochs: 5,
            dropout: 0.3,
            ..Default::default()
        };
        let split = Split {
            train: (0..6).collect(),
            valid: vec![6, 7],
            test: vec![],
        };
        let out = finetune(&enc, LabeledData { graphs: &g, labels: &labels }, &spec(TaskKind::Classification), &split, &cfg).unwrap();
        let p = predict(&out.model, &[g[0].clone(), g[0].clone(), g[3].clone()]).unwrap();
        assert_eq!(p[0], p[1]);
        assert!(p.iter().all(|r| r[0] > 0.0 && r[0] < 1.0));
        let perm = g[2].permute(&[6, 0, 5, 1, 4, 2, 3]).unwrap();
        let q = predict(&out.model, &[g[2].clone(), perm]).unwrap();
        assert!((q[0][0] - q[1][0]).abs() < 1e-9);
    }

    #[test]
    fn model_file_roundtrips() {
        let enc = encoder();
        let g = graphs();
        let labels = vec![vec![Some(0.5), None]; g.len()];
        let tasks = TaskSpec {
            kind: TaskKind::Regression,
            names: vec!["logS".into(), "with,comma".into()],
        };
        let cfg = FinetuneConfig {
            epochs: 2,
            ..Default::default()
        };
        let out = finetune(&enc, LabeledData { graphs: &g, labels: &labels }, &tasks, &all_train(8), &cfg).unwrap();
        let bytes = out.model.to_bytes();
        let back = FineTunedModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, out.model);
        assert_eq!(back.to_bytes(), bytes);
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(matches!(FineTunedModel::from_bytes(&wrong), Err(TrainError::VersionMismatch { .. })));
    }
}
