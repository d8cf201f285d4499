//! Dense fp64 linear algebra and deterministic randomness.
//!
//! Batches are row-major `n x d` matrices with one sample per row, so a
//! linear map applied to a batch is `h.matmul(&w)` with `w` of shape
//! `d_in x d_out`.

mod matrix;
mod rng;
mod stats;

pub use matrix::Matrix;
pub use rng::{derive_seed, Rng};
pub use stats::{pearson, ranks, spearman};
