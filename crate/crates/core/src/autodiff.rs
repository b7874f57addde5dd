//! Tape-based reverse-mode differentiation over dense [`Tensor`]s.
//!
//! A [`Tape`] records every operation applied to the [`Var`] handles it
//! hands out. Parents always precede children on the tape, so the
//! backward sweep is a single reverse pass over the record list.
//!
//! ```
//! use digmol::autodiff::Tape;
//! use digmol::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::from_rows(&[[-1.0, 1.0], [2.0, -3.0]]));
//! let r = tape.relu(w);
//! let loss = tape.sum(r);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w), Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
//! ```

use thiserror::Error;

use crate::tensor::{ShapeError, Tensor};

/// Added to row norms before dividing in [`Tape::l2_normalize_rows`].
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("backward requires a scalar output, got shape {0:?}")]
    NotScalar([usize; 2]),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    /// Saves the per-row norms.
    L2NormalizeRows(Var, Vec<f64>),
    Sum(Var),
    MeanRows(Var),
    RowSums(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient of `v`; zeros when `v` did not participate.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn try_get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies `v`'s value as a constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var, AutodiffError> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(AutodiffError::NonFinite(name));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                self.requires_grad(*a) || self.requires_grad(*b)
            }
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::L2NormalizeRows(a, _)
            | Op::Sum(a)
            | Op::MeanRows(a)
            | Op::RowSums(a)
            | Op::Transpose(a) => self.requires_grad(*a),
            Op::ConcatRows(parts) => parts.iter().any(|p| self.requires_grad(*p)),
        };
        Ok(self.push(value, op, requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).matmul(self.value(b))?;
        self.record(value, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.record(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.record(value, Op::Sub(a, b), "sub")
    }

    pub fn mul_elementwise(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.record(value, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        let value = self.value(a).scale(alpha);
        self.record(value, Op::Scale(a, alpha), "scale")
            .expect("scaling finite values by a finite factor")
    }

    /// Adds the `1 × D` row `b` to every row of the `N × D` matrix `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(ShapeError::Mismatch {
                op: "add_row",
                left: av.shape(),
                right: bv.shape(),
            }
            .into());
        }
        let mut value = av.clone();
        for i in 0..value.rows() {
            for (x, y) in value.row_mut(i).iter_mut().zip(bv.row(0)) {
                *x += y;
            }
        }
        self.record(value, Op::AddRow(a, b), "add_row")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push_unary(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push_unary(value, Op::Sigmoid(a))
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        self.push_unary(value, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(f64::exp);
        self.record(value, Op::Exp(a), "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(f64::ln);
        self.record(value, Op::Log(a), "log")
    }

    /// Divides each row by `‖row‖ + NORM_EPS`.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        let mut norms = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let n = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(n);
            let s = n + NORM_EPS;
            for v in value.row_mut(i) {
                *v /= s;
            }
        }
        self.push_unary(value, Op::L2NormalizeRows(a, norms))
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push_unary(value, Op::Sum(a))
    }

    /// Column-wise mean over rows: `N × D → 1 × D`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(ShapeError::Mismatch {
                op: "mean_rows",
                left: x.shape(),
                right: [1, x.cols()],
            }
            .into());
        }
        let mut value = Tensor::zeros(1, x.cols());
        for i in 0..x.rows() {
            for (o, v) in value.row_mut(0).iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        let inv = 1.0 / x.rows() as f64;
        for o in value.data_mut() {
            *o *= inv;
        }
        self.record(value, Op::MeanRows(a), "mean_rows")
    }

    /// Per-row sums: `N × D → N × 1`.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let value = self.value(a).row_sums();
        self.push_unary(value, Op::RowSums(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push_unary(value, Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let values: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let value = Tensor::concat_rows(&values)?;
        self.record(value, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    fn push_unary(&mut self, value: Tensor, op: Op) -> Var {
        // Unary ops here map finite inputs to finite outputs; inputs were
        // already checked when they were recorded.
        let requires_grad = match &op {
            Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::L2NormalizeRows(a, _)
            | Op::Sum(a)
            | Op::RowSums(a)
            | Op::Transpose(a)
            | Op::Scale(a, _) => self.requires_grad(*a),
            _ => unreachable!("push_unary used for a non-unary op"),
        };
        self.push(value, op, requires_grad)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(AutodiffError::NotScalar(shape));
        }
        self.backward_with_seed(loss, &Tensor::scalar(1.0))
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `output`)
    /// back to every node that requires a gradient.
    pub fn backward_with_seed(&self, output: Var, seed: &Tensor) -> Result<Gradients, AutodiffError> {
        self.value(output).check_same(seed, "backward seed")?;
        let n = output.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.clone());

        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        for (id, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[id] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.axpy(1.0, &g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let ga = g.matmul(&bv.transpose()).expect("matmul grad shape");
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let gb = av.transpose().matmul(g).expect("matmul grad shape");
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let ga = g.zip_map(bv, "mul grad", |x, y| x * y).unwrap();
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let gb = g.zip_map(av, "mul grad", |x, y| x * y).unwrap();
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, alpha) => self.accumulate(grads, *a, g.scale(*alpha)),
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.requires_grad(*b) {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Relu(a) => {
                let ga = g
                    .zip_map(self.value(*a), "relu grad", |gv, x| if x > 0.0 { gv } else { 0.0 })
                    .unwrap();
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = g
                    .zip_map(&node.value, "sigmoid grad", |gv, s| gv * s * (1.0 - s))
                    .unwrap();
                self.accumulate(grads, *a, ga);
            }
            Op::Softplus(a) => {
                let ga = g
                    .zip_map(self.value(*a), "softplus grad", |gv, x| gv * sigmoid(x))
                    .unwrap();
                self.accumulate(grads, *a, ga);
            }
            Op::Exp(a) => {
                let ga = g.zip_map(&node.value, "exp grad", |gv, e| gv * e).unwrap();
                self.accumulate(grads, *a, ga);
            }
            Op::Log(a) => {
                let ga = g
                    .zip_map(self.value(*a), "log grad", |gv, x| gv / x)
                    .unwrap();
                self.accumulate(grads, *a, ga);
            }
            Op::L2NormalizeRows(a, norms) => {
                let x = self.value(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                for (i, &n) in norms.iter().enumerate() {
                    let s = n + NORM_EPS;
                    let (xr, gr) = (x.row(i), g.row(i));
                    let dot: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    let coef = if n > 0.0 { dot / (s * s * n) } else { 0.0 };
                    for ((o, &xv), &gv) in ga.row_mut(i).iter_mut().zip(xr).zip(gr) {
                        *o = gv / s - coef * xv;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let [r, c] = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::filled(r, c, g.item()));
            }
            Op::MeanRows(a) => {
                let [r, c] = self.value(*a).shape();
                let inv = 1.0 / r as f64;
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(0)) {
                        *o = v * inv;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::RowSums(a) => {
                let [r, c] = self.value(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    ga.row_mut(i).iter_mut().for_each(|o| *o = gi);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let [r, c] = self.value(*p).shape();
                    let slice = g.data()[offset * c..(offset + r) * c].to_vec();
                    offset += r;
                    if self.requires_grad(*p) {
                        let gp = Tensor::from_vec(r, c, slice).expect("concat grad slice");
                        self.accumulate(grads, *p, gp);
                    }
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// `f` receives a fresh tape and one leaf per entry of `params`, and must
/// return a scalar. The result is the maximum over all coordinates of
/// `|g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
/// Result of comparing tape gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// Largest `|ad - fd| / max(|ad| + |fd|, 1e-8)` over all coordinates.
    pub max_elementwise: f64,
    /// Per parameter tensor, `max|ad - fd| / max|fd|` (absolute if `fd` is all zero).
    pub normwise: Vec<f64>,
}

impl FdReport {
    pub fn max_normwise(&self) -> f64 {
        self.normwise.iter().copied().fold(0.0, f64::max)
    }
}

/// Worst elementwise relative error between tape and central-difference
/// gradients of the scalar `f`.
pub fn finite_difference_check<F>(f: F, params: &[Tensor], step: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    Ok(finite_difference_report(f, params, step)?.max_elementwise)
}

/// Like [`finite_difference_check`] but also reports a per-tensor normwise
/// error, which stays meaningful for coordinates whose gradient is near the
/// round-off floor of the difference quotient.
pub fn finite_difference_report<F>(f: F, params: &[Tensor], step: f64) -> Result<FdReport, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let eval = |ps: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut normwise = Vec::with_capacity(params.len());
    let mut probe = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        let (mut diff_max, mut fd_max) = (0.0f64, 0.0f64);
        for j in 0..params[pi].len() {
            let original = params[pi].data()[j];
            probe[pi].data_mut()[j] = original + step;
            let plus = eval(&probe)?;
            probe[pi].data_mut()[j] = original - step;
            let minus = eval(&probe)?;
            probe[pi].data_mut()[j] = original;

            let fd = (plus - minus) / (2.0 * step);
            let ad = analytic.data()[j];
            let err = (ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8);
            worst = worst.max(err);
            diff_max = diff_max.max((ad - fd).abs());
            fd_max = fd_max.max(fd.abs());
        }
        normwise.push(if fd_max > 0.0 { diff_max / fd_max } else { diff_max });
    }
    Ok(FdReport { max_elementwise: worst, normwise })
}
