//! NT-Xent and the three interaction losses.
//!
//! For a pair of `B × D` matrices the `2B` stacked rows act as anchors.
//! Each anchor's positive is the row for the same molecule in the other
//! matrix; the softmax denominator runs over the other `2B − 1` rows.
//!
//! ```text
//! L_GI = ½[nt(Zθ¹, Zθ²) + nt(Zξ¹, Zξ²)]
//! L_EI = ½[nt(Zθ¹, Zξ¹) + nt(Zθ², Zξ²)]
//! L_MI = ½[nt(Zθ¹, Zξ²) + nt(Zθ², Zξ¹)]
//! L    = α·L_GI + β·L_EI + γ·L_MI
//! ```

use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var, NORM_EPS};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContrastiveError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("NT-Xent needs at least 2 rows per view, got {0}")]
    BatchTooSmall(usize),
    #[error("views have shapes {0:?} and {1:?}")]
    ShapeMismatch([usize; 2], [usize; 2]),
    #[error("invalid loss weights: {0}")]
    InvalidWeights(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            tau: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ContrastiveError> {
        if !(self.tau > 0.0) {
            return Err(ContrastiveError::InvalidWeights("tau must be positive"));
        }
        let ws = [self.alpha, self.beta, self.gamma];
        if ws.iter().any(|w| !(*w >= 0.0)) {
            return Err(ContrastiveError::InvalidWeights("weights must be nonnegative"));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(ContrastiveError::InvalidWeights("weights are all zero"));
        }
        Ok(())
    }
}

/// `z1·z2 / (‖z1‖·‖z2‖)`, with the same norm guard as the loss.
pub fn cosine_sim(z1: &[f64], z2: &[f64]) -> f64 {
    let dot: f64 = z1.iter().zip(z2).map(|(a, b)| a * b).sum();
    let n1 = z1.iter().map(|v| v * v).sum::<f64>().sqrt() + NORM_EPS;
    let n2 = z2.iter().map(|v| v * v).sum::<f64>().sqrt() + NORM_EPS;
    dot / (n1 * n2)
}

/// NT-Xent between row-aligned views `za` and `zb`, averaged over all
/// `2B` anchors.
pub fn nt_xent(tape: &mut Tape, za: Var, zb: Var, tau: f64) -> Result<Var, ContrastiveError> {
    let (sa, sb) = (tape.value(za).shape(), tape.value(zb).shape());
    if sa != sb {
        return Err(ContrastiveError::ShapeMismatch(sa, sb));
    }
    let b = sa[0];
    if b < 2 {
        return Err(ContrastiveError::BatchTooSmall(b));
    }
    let n = 2 * b;

    let stacked = tape.concat_rows(&[za, zb])?;
    let unit = tape.l2_normalize_rows(stacked);
    let unit_t = tape.transpose(unit);
    let sims = tape.matmul(unit, unit_t)?;
    let logits = tape.scale(sims, 1.0 / tau);

    let mut off_diag = Tensor::filled(n, n, 1.0);
    let mut positives = Tensor::zeros(n, n);
    for i in 0..n {
        off_diag.set(i, i, 0.0);
        positives.set(i, (i + b) % n, 1.0);
    }
    let off_diag = tape.constant(off_diag);
    let positives = tape.constant(positives);

    let e = tape.exp(logits)?;
    let masked = tape.mul_elementwise(e, off_diag)?;
    let denom = tape.row_sums(masked);
    let log_denom = tape.log(denom)?;
    let log_denom = tape.sum(log_denom);
    let pos = tape.mul_elementwise(logits, positives)?;
    let pos = tape.sum(pos);
    let total = tape.sub(log_denom, pos)?;
    Ok(tape.scale(total, 1.0 / n as f64))
}

/// NT-Xent value for plain tensors.
pub fn nt_xent_value(za: &Tensor, zb: &Tensor, tau: f64) -> Result<f64, ContrastiveError> {
    let mut tape = Tape::new();
    let a = tape.constant(za.clone());
    let b = tape.constant(zb.clone());
    let l = nt_xent(&mut tape, a, b, tau)?;
    Ok(tape.value(l).item())
}

/// The four projected views of a mini-batch, rows aligned by molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub z_theta_1: Tensor,
    pub z_theta_2: Tensor,
    pub z_xi_1: Tensor,
    pub z_xi_2: Tensor,
}

impl ContrastiveBatch {
    pub fn validate(&self) -> Result<(), ContrastiveError> {
        let s = self.z_theta_1.shape();
        for t in [&self.z_theta_2, &self.z_xi_1, &self.z_xi_2] {
            if t.shape() != s {
                return Err(ContrastiveError::ShapeMismatch(s, t.shape()));
            }
        }
        Ok(())
    }
}

/// Loss handles on a tape.
#[derive(Debug, Clone, Copy)]
pub struct JointLossVars {
    pub joint: Var,
    pub graph_interaction: Var,
    pub encoder_interaction: Var,
    pub multi_interaction: Var,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub joint: f64,
    pub graph_interaction: f64,
    pub encoder_interaction: f64,
    pub multi_interaction: f64,
}

impl JointLossVars {
    pub fn values(&self, tape: &Tape) -> LossComponents {
        LossComponents {
            joint: tape.value(self.joint).item(),
            graph_interaction: tape.value(self.graph_interaction).item(),
            encoder_interaction: tape.value(self.encoder_interaction).item(),
            multi_interaction: tape.value(self.multi_interaction).item(),
        }
    }
}

/// Joint loss on a tape. The target views `xi_1`/`xi_2` are detached
/// before use, so nothing upstream of them receives a gradient.
pub fn joint_loss(
    tape: &mut Tape,
    theta_1: Var,
    theta_2: Var,
    xi_1: Var,
    xi_2: Var,
    w: &LossWeights,
) -> Result<JointLossVars, ContrastiveError> {
    w.validate()?;
    let xi_1 = tape.detach(xi_1);
    let xi_2 = tape.detach(xi_2);

    let half_sum = |tape: &mut Tape, p: (Var, Var), q: (Var, Var)| -> Result<Var, ContrastiveError> {
        let a = nt_xent(tape, p.0, p.1, w.tau)?;
        let b = nt_xent(tape, q.0, q.1, w.tau)?;
        let s = tape.add(a, b)?;
        Ok(tape.scale(s, 0.5))
    };
    let gi = half_sum(tape, (theta_1, theta_2), (xi_1, xi_2))?;
    let ei = half_sum(tape, (theta_1, xi_1), (theta_2, xi_2))?;
    let mi = half_sum(tape, (theta_1, xi_2), (theta_2, xi_1))?;

    let a = tape.scale(gi, w.alpha);
    let b = tape.scale(ei, w.beta);
    let c = tape.scale(mi, w.gamma);
    let ab = tape.add(a, b)?;
    let joint = tape.add(ab, c)?;
    Ok(JointLossVars {
        joint,
        graph_interaction: gi,
        encoder_interaction: ei,
        multi_interaction: mi,
    })
}

/// Loss components for a complete batch, without gradients.
pub fn joint_loss_value(batch: &ContrastiveBatch, w: &LossWeights) -> Result<LossComponents, ContrastiveError> {
    batch.validate()?;
    let mut tape = Tape::new();
    let t1 = tape.constant(batch.z_theta_1.clone());
    let t2 = tape.constant(batch.z_theta_2.clone());
    let x1 = tape.constant(batch.z_xi_1.clone());
    let x2 = tape.constant(batch.z_xi_2.clone());
    let vars = joint_loss(&mut tape, t1, t2, x1, x2, w)?;
    Ok(vars.values(&tape))
}
