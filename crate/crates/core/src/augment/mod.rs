//! View construction, inpainting corruption and jigsaw puzzles.

mod jigsaw;
mod mask;
mod ops;
mod views;

use thiserror::Error;

pub use jigsaw::{make_jigsaw, reassemble, shuffled_positions, JigsawInstance};
pub use mask::{corrupt, corrupt_with_fill, Fill, MaskShape, MaskSpec};
pub use ops::{gaussian_blur, resize_bilinear};
pub use views::{batch_views, make_views, AugmentPolicy, ViewBatch};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("degenerate crop: {0}")]
    DegenerateCrop(String),
    #[error("infeasible mask coverage: {0}")]
    InfeasibleCoverage(String),
    #[error("grid {m}x{n} with gap {gap} does not fit a {h}x{w} image")]
    GridTooLarge {
        m: usize,
        n: usize,
        gap: usize,
        h: usize,
        w: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}
