//! Training loops: locked backprop, single-SG and every-layer-SG decoupled
//! training, and the feedback-alignment family.
//!
//! Unit conventions. Network losses are batch means, so true gradients
//! carry a `1/n` factor. Synthetic gradients predict per-sample gradients:
//! their target is `n · dL/dh` and the lower segment receives `SG / n`.
//! Every step reads a single pre-step snapshot of all parameters, so the
//! lower-segment, upper-segment and SG updates commute.

mod config;
mod run;
mod step;

pub use config::{FeedbackInit, NetworkSpec, Placement, TrainConfig};
pub use run::{evaluate, run_experiment, Evaluation, RunSummary, CHECKPOINT_FILE, METRICS_FILE};
pub use step::{batch_indices, EpsSample, ExperimentRecord, SgSlot, StepGrads, StepOutcome, Trainer};
