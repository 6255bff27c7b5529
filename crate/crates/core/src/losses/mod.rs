//! Reference loss functions in f64 with analytic gradients.
//!
//! Training converts network outputs to f64 and calls these directly, so the values
//! optimised are the values tested here.

mod contrastive;
mod gradcheck;
mod inpaint;
mod jigsaw;

use thiserror::Error;

pub use contrastive::{
    cosine_sim, denominator_indices, nt_xent_batch, nt_xent_batch_with_grad, nt_xent_pair, ContrastiveConfig, EmbeddingBatch,
};
pub use gradcheck::{finite_difference, grad_check, GradCheck, Scheme};
pub use inpaint::{inpaint_loss, inpaint_loss_with_grad, Region};
pub use jigsaw::{jigsaw_loss, jigsaw_loss_from_logits, softmax_rows, JigsawLoss, JigsawReduction};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("views {i} and {j} are not a positive pair")]
    NotAPositivePair { i: usize, j: usize },
    #[error("contrastive batches need an even number (>= 2) of embeddings, got {0}")]
    OddBatch(usize),
    #[error("non-finite embedding value")]
    NonFiniteEmbedding,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("row {row} of the position distribution sums to {sum}")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("probability {value} in row {row} is outside [0, 1]")]
    InvalidProbability { row: usize, value: f64 },
    #[error("positions are not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("loss is not finite at perturbed input {index}")]
    NonFiniteLoss { index: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
