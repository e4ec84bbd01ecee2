//! Minimal reverse-mode differentiation for small sequence models.
//!
//! The crate covers exactly what the trajectory VAE needs: a tape of vector
//! operations, affine/MLP layers, a two-gate recurrent cell, a diagonal
//! Gaussian latent with reparameterization, categorical and exponential
//! likelihood heads, Adam, a binary checkpoint format and a finite-difference
//! gradient checker.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod vae;

pub use checkpoint::Checkpoint;
pub use layers::{CellKind, GatedCell, Linear, Mlp};
pub use optim::{adam_step, AdamState};
pub use params::{ParamId, ParamSet};
pub use tape::{log_sum_exp, softmax, Gradients, Tape, Var};
pub use tensor::Tensor;
pub use vae::{elbo_loss, exponential_nll, kl_to_standard_normal, reparameterize, Elbo, GaussianParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("variable was not recorded on this tape")]
    GraphNotRecorded,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Seeded generator used for all initialization and sampling.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Standard normal draws from the shared generator type.
pub fn standard_normal(rng: &mut Rng, n: usize) -> Tensor {
    use rand_distr::{Distribution, StandardNormal};
    Tensor::vector((0..n).map(|_| StandardNormal.sample(rng)).collect())
}
