//! Synthetic-gradient (SG) based decoupled training of feed-forward networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] dense fp64 matrices, seeded RNG and correlation helpers,
//! * [`network`] dense / batch-norm / activation blocks, losses and Adam,
//! * [`sg`] synthetic-gradient modules and the conspiring-gradients view
//!   (Backprop, SG, SG+prop, FA, DFA, Kickback),
//! * [`data`] artificial datasets, 2-D grids and IDX (MNIST) ingestion,
//! * [`trainer`] locked, single-SG and every-layer-SG training loops with
//!   JSONL metrics and checkpoints,
//! * [`analysis`] loss reconstruction, RDMs, probes and norm profiles,
//! * [`theory`] the linear-regression/linear-SG dynamical system, the
//!   constant-SG critical point example and the epsilon-tracking monitor.

pub mod analysis;
pub mod checkpoint;
pub mod data;
mod error;
pub mod linalg;
pub mod network;
pub mod sg;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{Matrix, Rng};
