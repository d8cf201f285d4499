//! Synthetic-gradient modules and the conspiring-gradients framework.

mod conspiring;
mod module;

pub use conspiring::{
    conspiring_sg_loss, conspiring_signal, sg_output, sg_target, GradientMethod, LockingFlags, MethodKind,
    SignalContext,
};
pub use module::{SgGrads, SgKind, SgModule};
