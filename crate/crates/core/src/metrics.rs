//! Ranking and regression metrics.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("labels need at least one positive and one negative")]
    DegenerateLabels,
    #[error("{0} predictions but {1} targets")]
    LengthMismatch(usize, usize),
    #[error("no values to score")]
    Empty,
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Index order by ascending score; NaN sorts last.
fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    idx
}

/// Runs of equal scores over `order`, as `(start, end)` half-open ranges.
fn tie_blocks(scores: &[f64], order: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || scores[order[i]] != scores[order[start]] {
            out.push((start, i));
            start = i;
        }
    }
    out
}

/// Area under the ROC curve: `(concordant + ½·tied) / (pos·neg)`,
/// computed from midranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::DegenerateLabels);
    }
    let order = order_by_score(scores);
    let mut pos_rank_sum = 0.0;
    for (start, end) in tie_blocks(scores, &order) {
        // 1-based midrank of the block.
        let midrank = (start + end + 1) as f64 / 2.0;
        let block_pos = order[start..end].iter().filter(|&&i| labels[i]).count();
        pos_rank_sum += midrank * block_pos as f64;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision. Scores are visited in descending order; a block of
/// tied scores is taken in one step, with precision measured after the
/// whole block.
pub fn prc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(MetricError::DegenerateLabels);
    }
    let mut order = order_by_score(scores);
    order.reverse();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for (start, end) in tie_blocks(scores, &order) {
        let block_pos = order[start..end].iter().filter(|&&i| labels[i]).count();
        tp += block_pos;
        seen += end - start;
        if block_pos > 0 {
            ap += (block_pos as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    check_lengths(pred.len(), truth.len())?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    check_lengths(pred.len(), truth.len())?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    RocAuc,
    PrcAuc,
    Rmse,
    Mae,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::RocAuc => "roc_auc",
            MetricKind::PrcAuc => "prc_auc",
            MetricKind::Rmse => "rmse",
            MetricKind::Mae => "mae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [MetricKind::RocAuc, MetricKind::PrcAuc, MetricKind::Rmse, MetricKind::Mae]
            .into_iter()
            .find(|m| m.as_str() == s)
    }

    pub fn is_classification(self) -> bool {
        matches!(self, MetricKind::RocAuc | MetricKind::PrcAuc)
    }

    pub fn higher_is_better(self) -> bool {
        self.is_classification()
    }
}

/// Per-task scores with a macro average over the tasks that could be
/// scored. Classification tasks lacking either class come out as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metric: MetricKind,
    pub task_names: Vec<String>,
    pub per_task: Vec<Option<f64>>,
    pub macro_average: Option<f64>,
    pub n_samples: usize,
}

impl EvalReport {
    pub fn n_tasks(&self) -> usize {
        self.task_names.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("task,{}\n", self.metric.as_str());
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (name, v) in self.task_names.iter().zip(&self.per_task) {
            out.push_str(&format!("{name},{}\n", fmt(*v)));
        }
        out.push_str(&format!("macro,{}\n", fmt(self.macro_average)));
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.task_names.iter().map(|n| n.len()).max().unwrap_or(0).max(5);
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "absent".into());
        writeln!(f, "{:<width$}  {}", "task", self.metric.as_str())?;
        for (name, v) in self.task_names.iter().zip(&self.per_task) {
            writeln!(f, "{name:<width$}  {}", cell(*v))?;
        }
        writeln!(f, "{:<width$}  {}", "macro", cell(self.macro_average))?;
        write!(f, "{} samples, {} tasks", self.n_samples, self.n_tasks())
    }
}

/// Scores `predictions[i][t]` against `labels[i][t]`, skipping missing
/// labels per task.
pub fn evaluate(
    metric: MetricKind,
    task_names: &[String],
    predictions: &[Vec<f64>],
    labels: &[Vec<Option<f64>>],
) -> Result<EvalReport, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), labels.len()));
    }
    let mut per_task = Vec::with_capacity(task_names.len());
    for t in 0..task_names.len() {
        let (mut p, mut y) = (Vec::new(), Vec::new());
        for (pred, lab) in predictions.iter().zip(labels) {
            if let Some(v) = lab.get(t).copied().flatten() {
                p.push(pred[t]);
                y.push(v);
            }
        }
        let bools = || y.iter().map(|&v| v >= 0.5).collect::<Vec<_>>();
        let score = match metric {
            MetricKind::RocAuc => roc_auc(&p, &bools()),
            MetricKind::PrcAuc => prc_auc(&p, &bools()),
            MetricKind::Rmse => rmse(&p, &y),
            MetricKind::Mae => mae(&p, &y),
        };
        per_task.push(match score {
            Ok(v) => Some(v),
            Err(MetricError::DegenerateLabels | MetricError::Empty) => None,
            Err(e) => return Err(e),
        });
    }
    let present: Vec<f64> = per_task.iter().flatten().copied().collect();
    let macro_average = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(EvalReport {
        metric,
        task_names: task_names.to_vec(),
        per_task,
        macro_average,
        n_samples: predictions.len(),
    })
}
