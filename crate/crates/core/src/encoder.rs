//! Graph encoders and the projection head.
//!
//! The main encoder stacks bidirectional diffusion layers:
//!
//! ```text
//! H' = relu( Σ_{k=0..K} ε·P_fᵏ·H·W_fwd[k] + (1−ε)·P_bᵏ·H·W_bwd[k] )
//! ```
//!
//! followed by a mean readout and a two-layer projection head. The GCN
//! variant replaces every layer by `relu(Ã·H·W)`.

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::graph::{MolGraph, TransitionPair};
use crate::smiles::FEATURE_LEN;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter {index} has shape {got:?}, expected {expected:?}")]
    ParamShape {
        index: usize,
        expected: [usize; 2],
        got: [usize; 2],
    },
    #[error("expected {expected} parameter tensors, got {got}")]
    ParamCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Diffusion,
    /// Plain graph convolution on the self-looped normalized adjacency.
    Gcn,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Diffusion => "diffusion",
            EncoderKind::Gcn => "gcn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "diffusion" => Some(EncoderKind::Diffusion),
            "gcn" => Some(EncoderKind::Gcn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub layers: usize,
    pub diffusion_steps: usize,
    pub epsilon: f64,
    pub hidden: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Diffusion,
            layers: 5,
            diffusion_steps: 2,
            epsilon: 0.5,
            hidden: 64,
            proj_hidden: 64,
            proj_dim: 32,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::InvalidConfig(m.to_string()));
        if self.layers == 0 {
            return bad("layers must be at least 1");
        }
        if self.kind == EncoderKind::Diffusion && self.diffusion_steps == 0 {
            return bad("diffusion_steps must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.hidden == 0 || self.proj_hidden == 0 || self.proj_dim == 0 {
            return bad("widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionLayerParams {
    /// `K + 1` forward-direction weights, `P_in × P_out` each.
    pub w_fwd: Vec<Tensor>,
    pub w_bwd: Vec<Tensor>,
    pub epsilon: f64,
}

impl DiffusionLayerParams {
    pub fn steps(&self) -> usize {
        self.w_fwd.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Diffusion(DiffusionLayerParams),
    Gcn { weight: Tensor },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(input, output),
            bias: Tensor::zeros(1, output),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: he_uniform(input, output, input, rng),
            bias: Tensor::zeros(1, output),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, vars: &DenseVars) -> Result<Var, AutodiffError> {
        debug_assert_eq!(tape.value(vars.weight).shape(), self.weight.shape());
        let xw = tape.matmul(x, vars.weight)?;
        tape.add_row(xw, vars.bias)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub layers: Vec<LayerParams>,
    pub projection: ProjectionHead,
}

/// Tape handles for every tensor of an [`EncoderParams`], in
/// [`EncoderParams::tensors`] order.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub flat: Vec<Var>,
}

/// Uniform in `±sqrt(6 / fan_in)`.
fn he_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized above")
}

impl EncoderParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: EncoderConfig) -> Result<Self, EncoderError> {
        Self::build(config, &mut |r, c, _| Tensor::zeros(r, c))
    }

    /// He-style uniform initialization. Diffusion layers sum `K + 1`
    /// propagated copies of the input, so their fan-in is `P_in·(K+1)`.
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self, EncoderError> {
        Self::build(config, &mut |r, c, fan_in| he_uniform(r, c, fan_in, rng))
    }

    fn build(
        config: EncoderConfig,
        make: &mut dyn FnMut(usize, usize, usize) -> Tensor,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        let mut width = FEATURE_LEN;
        for _ in 0..config.layers {
            let layer = match config.kind {
                EncoderKind::Diffusion => {
                    let terms = config.diffusion_steps + 1;
                    let fan_in = width * terms;
                    let w_fwd = (0..terms).map(|_| make(width, config.hidden, fan_in)).collect();
                    let w_bwd = (0..terms).map(|_| make(width, config.hidden, fan_in)).collect();
                    LayerParams::Diffusion(DiffusionLayerParams {
                        w_fwd,
                        w_bwd,
                        epsilon: config.epsilon,
                    })
                }
                EncoderKind::Gcn => LayerParams::Gcn {
                    weight: make(width, config.hidden, width),
                },
            };
            layers.push(layer);
            width = config.hidden;
        }
        let mut dense = |i: usize, o: usize| DenseLayer {
            weight: make(i, o, i),
            bias: Tensor::zeros(1, o),
        };
        let projection = ProjectionHead {
            hidden: dense(config.hidden, config.proj_hidden),
            output: dense(config.proj_hidden, config.proj_dim),
        };
        Ok(Self {
            config,
            layers,
            projection,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.hidden
    }

    /// Every parameter tensor in a fixed order: layers (forward weights
    /// then backward weights per diffusion layer), then the projection
    /// head (hidden weight, hidden bias, output weight, output bias).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Diffusion(d) => {
                    out.extend(d.w_fwd.iter());
                    out.extend(d.w_bwd.iter());
                }
                LayerParams::Gcn { weight } => out.push(weight),
            }
        }
        let p = &self.projection;
        out.extend([&p.hidden.weight, &p.hidden.bias, &p.output.weight, &p.output.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Diffusion(d) => {
                    out.extend(d.w_fwd.iter_mut());
                    out.extend(d.w_bwd.iter_mut());
                }
                LayerParams::Gcn { weight } => out.push(weight),
            }
        }
        let p = &mut self.projection;
        out.extend([
            &mut p.hidden.weight,
            &mut p.hidden.bias,
            &mut p.output.weight,
            &mut p.output.bias,
        ]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Replaces every tensor, checking count and shapes against `self`.
    pub fn load_tensors(&mut self, tensors: Vec<Tensor>) -> Result<(), EncoderError> {
        let slots = self.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(EncoderError::ParamCount {
                expected: slots.len(),
                got: tensors.len(),
            });
        }
        for (index, (slot, t)) in slots.into_iter().zip(tensors).enumerate() {
            if slot.shape() != t.shape() {
                return Err(EncoderError::ParamShape {
                    index,
                    expected: slot.shape(),
                    got: t.shape(),
                });
            }
            *slot = t;
        }
        Ok(())
    }

    /// Records all parameters on `tape`, as trainable leaves or constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        let flat = self
            .tensors()
            .into_iter()
            .map(|t| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        EncoderVars { flat }
    }
}

/// One bidirectional diffusion layer. `w_fwd`/`w_bwd` hold `K + 1` handles each.
pub fn diffusion_layer(
    tape: &mut Tape,
    h: Var,
    forward: Var,
    backward: Var,
    w_fwd: &[Var],
    w_bwd: &[Var],
    epsilon: f64,
) -> Result<Var, AutodiffError> {
    let fwd = diffuse(tape, h, forward, w_fwd)?;
    let bwd = diffuse(tape, h, backward, w_bwd)?;
    let fwd = tape.scale(fwd, epsilon);
    let bwd = tape.scale(bwd, 1.0 - epsilon);
    let total = tape.add(fwd, bwd)?;
    Ok(tape.relu(total))
}

/// `Σ_k Pᵏ·H·W[k]`, applying `P` repeatedly instead of forming powers.
fn diffuse(tape: &mut Tape, h: Var, transition: Var, weights: &[Var]) -> Result<Var, AutodiffError> {
    let mut propagated = h;
    let mut acc = tape.matmul(h, weights[0])?;
    for w in &weights[1..] {
        propagated = tape.matmul(transition, propagated)?;
        let term = tape.matmul(propagated, *w)?;
        acc = tape.add(acc, term)?;
    }
    Ok(acc)
}

/// `relu(Ã·H·W)`.
pub fn gcn_layer(tape: &mut Tape, h: Var, a_norm: Var, w: Var) -> Result<Var, AutodiffError> {
    let ah = tape.matmul(a_norm, h)?;
    let ahw = tape.matmul(ah, w)?;
    Ok(tape.relu(ahw))
}

/// Column-wise mean over nodes.
pub fn readout(tape: &mut Tape, nodes: Var) -> Result<Var, EncoderError> {
    if tape.value(nodes).rows() == 0 {
        return Err(EncoderError::EmptyGraph);
    }
    Ok(tape.mean_rows(nodes)?)
}

/// dense → relu → dense. The output is not normalized.
pub fn project(
    tape: &mut Tape,
    h_graph: Var,
    head: &ProjectionHead,
    hidden: DenseVars,
    output: DenseVars,
) -> Result<Var, AutodiffError> {
    let a = head.hidden.forward(tape, h_graph, &hidden)?;
    let a = tape.relu(a);
    head.output.forward(tape, a, &output)
}

/// Graph-level embedding `h` (1 × hidden) and projection `z` (1 × proj_dim).
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub h: Var,
    pub z: Var,
}

/// Runs the full encoder on `tape` using parameter handles from
/// [`EncoderParams::register`].
pub fn encode_on_tape(
    tape: &mut Tape,
    graph: &MolGraph,
    params: &EncoderParams,
    vars: &EncoderVars,
) -> Result<Encoded, EncoderError> {
    if graph.n_nodes() == 0 {
        return Err(EncoderError::EmptyGraph);
    }
    let mut h = tape.constant(graph.features().clone());
    let mut cursor = 0;
    match params.config.kind {
        EncoderKind::Diffusion => {
            let TransitionPair { forward, backward } = graph.transitions();
            let pf = tape.constant(forward);
            let pb = tape.constant(backward);
            for layer in &params.layers {
                let LayerParams::Diffusion(d) = layer else {
                    return Err(EncoderError::InvalidConfig("layer kind mismatch".into()));
                };
                let terms = d.w_fwd.len();
                let w_fwd = &vars.flat[cursor..cursor + terms];
                let w_bwd = &vars.flat[cursor + terms..cursor + 2 * terms];
                cursor += 2 * terms;
                h = diffusion_layer(tape, h, pf, pb, w_fwd, w_bwd, d.epsilon)?;
            }
        }
        EncoderKind::Gcn => {
            let a = tape.constant(graph.normalized_self_loop_adjacency());
            for layer in &params.layers {
                let LayerParams::Gcn { .. } = layer else {
                    return Err(EncoderError::InvalidConfig("layer kind mismatch".into()));
                };
                h = gcn_layer(tape, h, a, vars.flat[cursor])?;
                cursor += 1;
            }
        }
    }
    let pooled = readout(tape, h)?;
    let p = &vars.flat[cursor..cursor + 4];
    let hidden = DenseVars {
        weight: p[0],
        bias: p[1],
    };
    let output = DenseVars {
        weight: p[2],
        bias: p[3],
    };
    let z = project(tape, pooled, &params.projection, hidden, output)?;
    Ok(Encoded { h: pooled, z })
}

/// Gradient-free forward pass returning `(h, z)` values.
pub fn encode(graph: &MolGraph, params: &EncoderParams) -> Result<(Tensor, Tensor), EncoderError> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let out = encode_on_tape(&mut tape, graph, params, &vars)?;
    Ok((tape.value(out.h).clone(), tape.value(out.z).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{make_pair, AugmentConfig};
    use crate::smiles::parse_smiles;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            hidden: 8,
            proj_hidden: 8,
            proj_dim: 4,
            ..EncoderConfig::default()
        }
    }

    fn params(seed: u64, config: EncoderConfig) -> EncoderParams {
        EncoderParams::init(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = EncoderConfig::default();
        c.epsilon = 1.5;
        assert!(c.validate().is_err());
        c = EncoderConfig {
            diffusion_steps: 0,
            ..EncoderConfig::default()
        };
        assert!(c.validate().is_err());
        c.kind = EncoderKind::Gcn;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn k0_term_has_no_graph_mixing() {
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_rows(&[[1.0, -2.0], [3.0, 0.5]]));
        let pf = tape.constant(Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
        let w_f = tape.constant(Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]));
        let w_b = tape.constant(Tensor::from_rows(&[[2.0, 0.0], [0.0, 2.0]]));
        let out = diffusion_layer(&mut tape, h, pf, pf, &[w_f], &[w_b], 0.25).unwrap();
        // relu(0.25·H + 0.75·2H) = relu(1.75·H)
        let expected = Tensor::from_rows(&[[1.75, 0.0], [5.25, 0.875]]);
        assert!(tape.value(out).max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn two_node_forward_step_swaps_rows() {
        let g = parse_smiles("CO").unwrap();
        let t = g.transitions();
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let pf = tape.constant(t.forward);
        let pb = tape.constant(t.backward);
        let zero = tape.constant(Tensor::zeros(2, 2));
        let eye = tape.constant(Tensor::identity(2));
        let out = diffusion_layer(&mut tape, h, pf, pb, &[zero, eye], &[zero, zero], 1.0).unwrap();
        assert_eq!(tape.value(out), &Tensor::from_rows(&[[3.0, 4.0], [1.0, 2.0]]));
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let p = params(3, small_config());
        let single = parse_smiles("C").unwrap();
        let joined = parse_smiles("O").unwrap().disjoint_union(&single);
        let changed = parse_smiles("N").unwrap().disjoint_union(&single);
        let node_out = |g: &MolGraph| {
            let mut tape = Tape::new();
            let vars = p.register(&mut tape, false);
            let pair = g.transitions();
            let pf = tape.constant(pair.forward);
            let pb = tape.constant(pair.backward);
            let x = tape.constant(g.features().clone());
            let LayerParams::Diffusion(d) = &p.layers[0] else { unreachable!() };
            let terms = d.w_fwd.len();
            let out = diffusion_layer(
                &mut tape,
                x,
                pf,
                pb,
                &vars.flat[..terms],
                &vars.flat[terms..2 * terms],
                d.epsilon,
            )
            .unwrap();
            tape.value(out).row(1).to_vec()
        };
        assert_eq!(node_out(&joined), node_out(&changed));
    }

    #[test]
    fn gcn_examples() {
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_rows(&[[1.0, -2.0]]));
        let a = tape.constant(Tensor::from_rows(&[[1.0]]));
        let w = tape.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let out = gcn_layer(&mut tape, h, a, w).unwrap();
        // H·W = [-5, -6] → relu
        assert_eq!(tape.value(out).data(), &[0.0, 0.0]);

        let benzene = parse_smiles("c1ccccc1").unwrap();
        let mut tape = Tape::new();
        let x: Vec<[f64; 1]> = (0..6).map(|i| [i as f64]).collect();
        let h = tape.constant(Tensor::from_rows(&x));
        let a = tape.constant(benzene.normalized_self_loop_adjacency());
        let w = tape.constant(Tensor::identity(1));
        let out = gcn_layer(&mut tape, h, a, w).unwrap();
        for i in 0..6 {
            let (prev, next) = ((i + 5) % 6, (i + 1) % 6);
            let expected = (prev + i + next) as f64 / 3.0;
            assert!((tape.value(out).get(i, 0) - expected).abs() < 1e-12);
        }

        let zero = tape.constant(Tensor::zeros(6, 1));
        let out = gcn_layer(&mut tape, zero, a, w).unwrap();
        assert_eq!(tape.value(out), &Tensor::zeros(6, 1));
    }

    #[test]
    fn readout_examples() {
        let mut tape = Tape::new();
        let one = tape.constant(Tensor::from_rows(&[[1.0, 2.0]]));
        let r = readout(&mut tape, one).unwrap();
        assert_eq!(tape.value(r).data(), &[1.0, 2.0]);
        let two = tape.constant(Tensor::from_rows(&[[1.0, 2.0], [1.0, 2.0]]));
        let r = readout(&mut tape, two).unwrap();
        assert_eq!(tape.value(r).data(), &[1.0, 2.0]);
        let none = tape.constant(Tensor::zeros(0, 2));
        assert_eq!(readout(&mut tape, none).unwrap_err(), EncoderError::EmptyGraph);
    }

    #[test]
    fn projection_examples() {
        let head = ProjectionHead {
            hidden: DenseLayer::zeros(3, 3),
            output: DenseLayer::zeros(3, 3),
        };
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::row_vector(&[0.5, 1.0, 2.0]));
        let hv = DenseVars {
            weight: tape.constant(head.hidden.weight.clone()),
            bias: tape.constant(head.hidden.bias.clone()),
        };
        let z = project(&mut tape, h, &head, hv, hv).unwrap();
        assert_eq!(tape.value(z), &Tensor::zeros(1, 3));

        let eye = DenseVars {
            weight: tape.constant(Tensor::identity(3)),
            bias: tape.constant(Tensor::zeros(1, 3)),
        };
        let z = project(&mut tape, h, &head, eye, eye).unwrap();
        assert_eq!(tape.value(z).data(), &[0.5, 1.0, 2.0]);
    }

    /// Locked at the first verified build.
    #[test]
    fn projection_golden_value() {
        let p = params(2024, small_config());
        let g = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        let (h, z) = encode(&g, &p).unwrap();
        assert_eq!(h.shape(), [1, 8]);
        assert_eq!(z.shape(), [1, 4]);
        let golden = GOLDEN_Z;
        assert!(
            z.max_abs_diff(&Tensor::row_vector(&golden)) < 1e-12,
            "z = {:?}",
            z.data()
        );
    }

    const GOLDEN_Z: [f64; 4] = [
    -0.07620826566510644,
    0.0724701220655751,
    0.02501895394725728,
    -0.15426458025464215,
];

    #[test]
    fn unaugmented_pair_encodes_identically() {
        let p = params(1, small_config());
        let g = parse_smiles("c1ccccc1O").unwrap();
        let (a, b) = make_pair(&g, &AugmentConfig::new(0.0, 0.0, 1).unwrap(), 0);
        let ea = encode(&a, &p).unwrap();
        let eb = encode(&b, &p).unwrap();
        assert_eq!(ea.0, eb.0);
        assert_eq!(ea.1, eb.1);
    }

    #[test]
    fn fully_masked_graph_is_finite() {
        let p = params(1, EncoderConfig::default());
        let g = parse_smiles("CCO").unwrap();
        let masked = crate::augment::mask_atoms(
            &g,
            &AugmentConfig::new(1.0, 0.0, 0).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        let (h, z) = encode(&masked, &p).unwrap();
        assert!(h.is_finite() && z.is_finite());
    }

    #[test]
    fn epsilon_one_leaves_backward_weights_without_gradient() {
        let config = EncoderConfig {
            epsilon: 1.0,
            ..small_config()
        };
        let p = params(5, config);
        let g = parse_smiles("CC(N)c1ccccc1").unwrap();
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, true);
        let out = encode_on_tape(&mut tape, &g, &p, &vars).unwrap();
        let loss = tape.sum(out.z);
        let grads = tape.backward(loss).unwrap();
        let terms = config.diffusion_steps + 1;
        let mut cursor = 0;
        let mut fwd_total = 0.0;
        for _ in 0..config.layers {
            for v in &vars.flat[cursor..cursor + terms] {
                fwd_total += grads.get(*v).max_abs();
            }
            for v in &vars.flat[cursor + terms..cursor + 2 * terms] {
                assert_eq!(grads.get(*v).max_abs(), 0.0);
            }
            cursor += 2 * terms;
        }
        assert!(fwd_total > 0.0);
    }

    #[test]
    fn load_tensors_checks_shapes() {
        let mut p = params(1, small_config());
        let mut ts: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
        ts[0] = Tensor::zeros(1, 1);
        assert!(matches!(p.load_tensors(ts), Err(EncoderError::ParamShape { index: 0, .. })));
        assert!(matches!(p.load_tensors(vec![]), Err(EncoderError::ParamCount { .. })));
    }

    #[test]
    fn gcn_encoder_runs() {
        let config = EncoderConfig {
            kind: EncoderKind::Gcn,
            ..small_config()
        };
        let p = params(1, config);
        assert_eq!(p.tensors().len(), 5 + 4);
        let (h, z) = encode(&parse_smiles("c1ccccc1O").unwrap(), &p).unwrap();
        assert_eq!((h.cols(), z.cols()), (8, 4));
    }
}
