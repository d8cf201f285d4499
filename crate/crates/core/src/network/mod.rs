//! Feed-forward layers with hand-derived backward passes, batch-mean
//! losses, and Adam.

mod adam;
mod layers;
mod loss;
mod net;

pub use adam::{adam_step, AdamConfig, AdamState, Param};
pub use layers::{
    sigmoid, Activation, ActivationCache, BatchNorm, BatchNormCache, BatchNormGrads, Dense, DenseCache, DenseGrads,
    Mode,
};
pub use loss::{loss_backward, loss_forward, per_sample_loss, softmax, LossKind};
pub use net::{Architecture, Block, BlockCache, BlockGrads, BlockOrder, ForwardPass, Network, Post};
pub(crate) use net::{load_param, push_param};
