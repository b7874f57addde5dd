//! Stochastic graph views: atom masking and unidirectional bond deletion.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::MolGraph;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("{name} must lie in [0, 1], got {value}")]
    RatioOutOfRange { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub mask_ratio: f64,
    pub unidir_delete_ratio: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mask_ratio: 0.25,
            unidir_delete_ratio: 0.25,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn new(mask_ratio: f64, unidir_delete_ratio: f64, seed: u64) -> Result<Self, AugmentError> {
        let cfg = Self {
            mask_ratio,
            unidir_delete_ratio,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, value) in [
            ("mask_ratio", self.mask_ratio),
            ("unidir_delete_ratio", self.unidir_delete_ratio),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(AugmentError::RatioOutOfRange { name, value });
            }
        }
        Ok(())
    }

    /// `floor(mask_ratio × n_atoms)`.
    pub fn masked_count(&self, n_atoms: usize) -> usize {
        floor_count(self.mask_ratio, n_atoms)
    }

    /// `floor(unidir_delete_ratio × n_bonds)`.
    pub fn deleted_count(&self, n_bonds: usize) -> usize {
        floor_count(self.unidir_delete_ratio, n_bonds)
    }
}

fn floor_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).floor() as usize).min(n)
}

/// Deterministic generator for sub-stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zeroes the feature rows of `floor(mask_ratio × N)` distinct atoms.
pub fn mask_atoms<R: Rng + ?Sized>(graph: &MolGraph, config: &AugmentConfig, rng: &mut R) -> MolGraph {
    let n = graph.n_nodes();
    let k = config.masked_count(n);
    let mut out = graph.clone();
    if k == 0 {
        return out;
    }
    let x = out.features_mut();
    for i in sample(rng, n, k) {
        x.row_mut(i).fill(0.0);
    }
    out
}

/// Removes one direction of `floor(ratio × bond_count)` distinct bonds.
/// The direction is a fair coin per bond; the reverse edge survives.
pub fn delete_unidirectional<R: Rng + ?Sized>(graph: &MolGraph, config: &AugmentConfig, rng: &mut R) -> MolGraph {
    let bonds = graph.bonds();
    let k = config.deleted_count(bonds.len());
    let mut out = graph.clone();
    if k == 0 {
        return out;
    }
    let picks = sample(rng, bonds.len(), k);
    let a = out.adjacency_mut();
    for bi in picks {
        let bond = bonds[bi];
        let (from, to) = if rng.gen_bool(0.5) {
            (bond.a, bond.b)
        } else {
            (bond.b, bond.a)
        };
        a.set(from, to, 0.0);
    }
    out
}

/// One augmented view: masking then unidirectional deletion.
pub fn augment_view<R: Rng + ?Sized>(graph: &MolGraph, config: &AugmentConfig, rng: &mut R) -> MolGraph {
    let masked = mask_atoms(graph, config, rng);
    delete_unidirectional(&masked, config, rng)
}

/// Two independent views of `graph`.
///
/// View one draws from sub-stream `2·stream`, view two from `2·stream + 1`
/// of `config.seed`, so distinct `stream` values never share randomness.
pub fn make_pair(graph: &MolGraph, config: &AugmentConfig, stream: u64) -> (MolGraph, MolGraph) {
    let mut r1 = stream_rng(config.seed, stream.wrapping_mul(2));
    let mut r2 = stream_rng(config.seed, stream.wrapping_mul(2).wrapping_add(1));
    (augment_view(graph, config, &mut r1), augment_view(graph, config, &mut r2))
}

/// Indices of all-zero feature rows. Unmasked atoms always carry an
/// element one-hot, so these are exactly the masked atoms.
pub fn masked_rows(graph: &MolGraph) -> Vec<usize> {
    (0..graph.n_nodes())
        .filter(|&i| graph.features().row(i).iter().all(|&v| v == 0.0))
        .collect()
}

/// Directed edges present in `original` but missing from `view`.
pub fn deleted_directions(original: &MolGraph, view: &MolGraph) -> Vec<(usize, usize)> {
    let n = original.n_nodes();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if original.has_edge(i, j) && !view.has_edge(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}
