//! Dual-interaction graph contrastive learning for molecules.
//!
//! The pipeline runs SMILES → [`graph::MolGraph`] → augmented view pairs →
//! bidirectional diffusion encoder → momentum-distilled contrastive
//! pretraining → frozen-encoder fine-tuning.

pub mod augment;
pub mod autodiff;
pub mod cli;
mod codec;
pub mod config;
pub mod contrastive;
pub mod encoder;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod momentum;
pub mod smiles;
pub mod split;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use graph::MolGraph;
pub use smiles::parse_smiles;
pub use tensor::Tensor;
