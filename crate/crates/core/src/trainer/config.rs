use serde::{Deserialize, Serialize};

use crate::network::Architecture;
use crate::sg::{MethodKind, SgKind};
use crate::{Error, Result};

/// Where synthetic-gradient modules sit. Boundary `k` is the activation
/// `h^k` between block `k-1` and block `k`; `k = N` is the network output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Placement {
    #[default]
    None,
    /// One module; the default boundary is `⌈N/2⌉`.
    Single {
        #[serde(default)]
        boundary: Option<usize>,
    },
    /// A module at every hidden boundary `1..N`.
    Every,
}

/// How FA/DFA feedback matrices are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackInit {
    /// Entries `N(0, 1/dim_h)` from the run seed.
    #[default]
    Random,
    /// All ones; DFA then coincides with Kickback.
    Ones,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub arch: Architecture,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default = "default_sg_kind")]
    pub sg_kind: SgKind,
    #[serde(default = "default_method")]
    pub method: MethodKind,
    #[serde(default)]
    pub feedback: FeedbackInit,
}

fn default_sg_kind() -> SgKind {
    SgKind::Linear
}

fn default_method() -> MethodKind {
    MethodKind::Backprop
}

impl NetworkSpec {
    pub fn backprop(arch: Architecture) -> Self {
        NetworkSpec {
            arch,
            placement: Placement::None,
            sg_kind: SgKind::Linear,
            method: MethodKind::Backprop,
            feedback: FeedbackInit::Random,
        }
    }

    pub fn single_sg(arch: Architecture, sg_kind: SgKind, boundary: Option<usize>) -> Self {
        NetworkSpec {
            arch,
            placement: Placement::Single { boundary },
            sg_kind,
            method: MethodKind::Sg,
            feedback: FeedbackInit::Random,
        }
    }

    pub fn every_layer_sg(arch: Architecture, sg_kind: SgKind) -> Self {
        NetworkSpec {
            arch,
            placement: Placement::Every,
            sg_kind,
            method: MethodKind::Sg,
            feedback: FeedbackInit::Random,
        }
    }

    pub fn with_method(mut self, method: MethodKind) -> Self {
        self.method = method;
        self
    }

    /// SG boundaries in increasing order.
    pub fn boundaries(&self) -> Result<Vec<usize>> {
        let n = self.arch.depth();
        match self.placement {
            Placement::None => Ok(Vec::new()),
            Placement::Single { boundary } => {
                let k = boundary.unwrap_or(n.div_ceil(2));
                if k == 0 || k > n {
                    return Err(Error::Invalid(format!("SG boundary {k} outside 1..={n}")));
                }
                Ok(vec![k])
            }
            Placement::Every => {
                if n < 2 {
                    return Err(Error::Invalid("every-layer SG needs at least two blocks".into()));
                }
                Ok((1..n).collect())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.boundaries()?;
        let has_sg = self.placement != Placement::None;
        if self.method.trains_sg() != has_sg {
            return Err(Error::Invalid(format!(
                "method {} {} SG modules but placement is {:?}",
                self.method.label(),
                if self.method.trains_sg() { "needs" } else { "does not use" },
                self.placement
            )));
        }
        if let MethodKind::SgProp { alpha } = self.method {
            if !alpha.is_finite() {
                return Err(Error::Invalid("sg-prop alpha must be finite".into()));
            }
        }
        if matches!(self.method, MethodKind::Fa | MethodKind::Dfa | MethodKind::Kickback) && self.arch.depth() < 2 {
            return Err(Error::Invalid(format!("{} needs at least two blocks", self.method.label())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_main: f64,
    pub lr_sg: f64,
    pub seed: u64,
    /// Weight decay added to dense weight gradients (0 disables).
    pub l2_penalty: f64,
    pub eps_monitor: bool,
    /// Replace the SG signal by the true gradient (diagnostic).
    pub oracle_sg: bool,
    pub log_every: usize,
    /// Evaluate loss and accuracy on the full training set at each record.
    pub full_eval: bool,
    /// Stop once the applied gradient norm drops below this (0 disables).
    pub grad_tol: f64,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            batch_size: 50,
            lr_main: 3e-5,
            lr_sg: 3e-5,
            seed: 0,
            l2_penalty: 0.0,
            eps_monitor: false,
            oracle_sg: false,
            log_every: 100,
            full_eval: true,
            grad_tol: 0.0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Invalid("iterations, batch_size and log_every must be positive".into()));
        }
        if !(self.lr_main > 0.0 && self.lr_sg > 0.0) {
            return Err(Error::Invalid("learning rates must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.grad_tol >= 0.0) {
            return Err(Error::Invalid("l2_penalty and grad_tol must be non-negative".into()));
        }
        Ok(())
    }
}
