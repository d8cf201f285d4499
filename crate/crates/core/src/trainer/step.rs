use serde::{Deserialize, Serialize};

use super::{FeedbackInit, NetworkSpec, TrainConfig};
use crate::checkpoint::Checkpoint;
use crate::linalg::{derive_seed, Matrix, Rng};
use crate::network::{AdamConfig, BlockGrads, ForwardPass, Mode, Network};
use crate::sg::{conspiring_signal, GradientMethod, MethodKind, SgGrads, SgModule, SignalContext};
use crate::{Error, Result};

/// Gradient-error diagnostics for a single-SG step, in batch-mean units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSample {
    /// `‖ĝ − dL/dh‖` where `ĝ` is the signal handed to the lower segment.
    pub sg_error: f64,
    /// `‖(ĝ − dL/dh) · dh/dθ_<h‖`, the error after backpropagation.
    pub param_error: f64,
    /// `‖dL/dθ_<h‖`.
    pub true_grad_norm: f64,
    /// `param_error / true_grad_norm`; absent when the true gradient is 0.
    pub eps_ratio: Option<f64>,
}

/// One metrics row. Evaluation fields describe the state before step
/// `iteration`; step fields describe that step (absent on the final row).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub iteration: usize,
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub batch_loss: Option<f64>,
    pub grad_norm: Option<f64>,
    pub sg_losses: Vec<f64>,
    pub eps: Option<EpsSample>,
    pub weight_sq_norms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgSlot {
    pub boundary: usize,
    pub module: SgModule,
}

/// Everything one step will apply, computed from a single snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGrads {
    pub blocks: Vec<BlockGrads>,
    pub sgs: Vec<SgGrads>,
}

impl StepGrads {
    pub fn norm(&self) -> f64 {
        let b: f64 = self.blocks.iter().map(BlockGrads::sum_sq).sum();
        let s: f64 = self.sgs.iter().map(SgGrads::sum_sq).sum();
        (b + s).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub sg_losses: Vec<f64>,
    pub grad_norm: f64,
    pub eps: Option<EpsSample>,
}

/// Minibatch for `iteration`: a fixed slice of a per-epoch permutation
/// seeded by `(seed, epoch)`. A batch at least as large as the data is the
/// whole dataset in order.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, iteration: usize) -> Vec<usize> {
    if batch_size >= n {
        return (0..n).collect();
    }
    let per_epoch = n / batch_size;
    let (epoch, j) = (iteration / per_epoch, iteration % per_epoch);
    let mut perm: Vec<usize> = (0..n).collect();
    Rng::new(derive_seed(seed, epoch as u64)).shuffle(&mut perm);
    perm[j * batch_size..(j + 1) * batch_size].to_vec()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    spec: NetworkSpec,
    config: TrainConfig,
    pub net: Network,
    pub sgs: Vec<SgSlot>,
    /// Per-boundary feedback for FA/DFA/Kickback, index `k - 1`.
    feedback: Vec<GradientMethod>,
    iteration: usize,
}

fn frobenius(grads: &[BlockGrads]) -> f64 {
    grads.iter().map(BlockGrads::sum_sq).sum::<f64>().sqrt()
}

impl Trainer {
    pub fn new(spec: NetworkSpec, config: TrainConfig) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let root = Rng::new(config.seed);
        let net = Network::new(spec.arch.clone(), &mut root.child(0), AdamConfig::with_lr(config.lr_main))?;
        let dims = &spec.arch.layer_dims;
        let dim_y = *dims.last().expect("validated");
        let sgs = spec
            .boundaries()?
            .into_iter()
            .map(|k| SgSlot {
                boundary: k,
                module: SgModule::new(spec.sg_kind, dims[k], dim_y, AdamConfig::with_lr(config.lr_sg)),
            })
            .collect();
        let mut fb_rng = root.child(1);
        let depth = net.depth();
        let mut draw = |rows: usize, cols: usize| match spec.feedback {
            FeedbackInit::Random => GradientMethod::random_feedback(&mut fb_rng, rows, cols),
            FeedbackInit::Ones => Matrix::filled(rows, cols, 1.0),
        };
        let feedback = match spec.method {
            MethodKind::Fa => (1..depth).map(|k| GradientMethod::fa(draw(dims[k], dims[k + 1]))).collect(),
            MethodKind::Dfa => (1..depth).map(|k| GradientMethod::dfa(draw(dims[k], dim_y))).collect(),
            MethodKind::Kickback => (1..depth).map(|_| GradientMethod::kickback()).collect(),
            _ => Vec::new(),
        };
        Ok(Trainer {
            spec,
            config,
            net,
            sgs,
            feedback,
            iteration: 0,
        })
    }

    /// Replaces the per-boundary feedback (index `k - 1`); used to run DFA
    /// with chosen matrices.
    pub fn with_feedback(mut self, feedback: Vec<GradientMethod>) -> Result<Self> {
        if feedback.len() != self.net.depth().saturating_sub(1) {
            return Err(Error::Invalid("one feedback method per hidden boundary".into()));
        }
        self.feedback = feedback;
        Ok(self)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn sg_method(&self) -> GradientMethod {
        match self.spec.method {
            MethodKind::SgProp { alpha } => GradientMethod::sg_prop(alpha),
            _ => GradientMethod::sg(),
        }
    }

    /// Gradients for one step from the given forward pass; reads only the
    /// current (pre-step) parameters.
    pub fn grads_from_pass(&self, pass: &ForwardPass, y: &Matrix) -> Result<(StepGrads, StepOutcome)> {
        let loss = self.net.loss(pass, y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at iteration {}", self.iteration)));
        }
        let top = self.net.loss_grad(pass, y)?;
        let depth = self.net.depth();
        let mut sg_losses = Vec::new();
        let mut sg_grads = Vec::new();
        let mut eps = None;
        let blocks = match (self.spec.method, self.sgs.len()) {
            (MethodKind::Backprop, _) => self.net.backward_range(pass, 0, depth, &top)?.1,
            (MethodKind::Sg | MethodKind::SgProp { .. }, 1) if self.spec.placement != super::Placement::Every => {
                let (blocks, l, g, e) = self.single_sg(pass, y, &top)?;
                sg_losses.push(l);
                sg_grads.push(g);
                eps = e;
                blocks
            }
            (MethodKind::Sg | MethodKind::SgProp { .. }, _) => {
                let (blocks, ls, gs) = self.every_layer_sg(pass, y, &top)?;
                sg_losses = ls;
                sg_grads = gs;
                blocks
            }
            (MethodKind::Fa, _) => self.feedback_alignment(pass, y, &top)?,
            (MethodKind::Dfa | MethodKind::Kickback, _) => self.direct_feedback(pass, y, &top)?,
        };
        let grads = StepGrads { blocks, sgs: sg_grads };
        let grad_norm = grads.norm();
        Ok((
            grads,
            StepOutcome {
                loss,
                sg_losses,
                grad_norm,
                eps,
            },
        ))
    }

    #[allow(clippy::type_complexity)]
    fn single_sg(
        &self,
        pass: &ForwardPass,
        y: &Matrix,
        top: &Matrix,
    ) -> Result<(Vec<BlockGrads>, f64, SgGrads, Option<EpsSample>)> {
        let slot = &self.sgs[0];
        let k = slot.boundary;
        let n = y.rows() as f64;
        let (grad_h, upper) = self.net.backward_range(pass, k, self.net.depth(), top)?;
        let h = pass.h(k);
        let target = grad_h.scale(n);
        let signal = if self.config.oracle_sg {
            grad_h.clone()
        } else {
            let ctx = SignalContext {
                grad_h: Some(&target),
                sg: Some(&slot.module),
                ..Default::default()
            };
            conspiring_signal(&self.sg_method(), h, y, &ctx)?.scale(1.0 / n)
        };
        let (_, mut blocks) = self.net.backward_range(pass, 0, k, &signal)?;
        let (sg_loss, sg_grads) = slot.module.loss_and_grads(h, y, &target)?;
        let eps = if self.config.eps_monitor {
            let diff = signal.sub(&grad_h)?;
            let param_error = frobenius(&self.net.backward_range(pass, 0, k, &diff)?.1);
            let true_grad_norm = frobenius(&self.net.backward_range(pass, 0, k, &grad_h)?.1);
            Some(EpsSample {
                sg_error: diff.frobenius_norm(),
                param_error,
                true_grad_norm,
                eps_ratio: (true_grad_norm > 0.0).then(|| param_error / true_grad_norm),
            })
        } else {
            None
        };
        blocks.extend(upper);
        Ok((blocks, sg_loss, sg_grads, eps))
    }

    /// Top block and top SG see the true gradient; every lower SG is fitted
    /// to its upper neighbour's prediction pushed through one block.
    fn every_layer_sg(&self, pass: &ForwardPass, y: &Matrix, top: &Matrix) -> Result<(Vec<BlockGrads>, Vec<f64>, Vec<SgGrads>)> {
        let depth = self.net.depth();
        let n = y.rows() as f64;
        let method = self.sg_method();
        let (mut delivered, top_grads) = self.net.backward_range(pass, depth - 1, depth, top)?;
        let mut blocks: Vec<Option<BlockGrads>> = vec![None; depth];
        blocks[depth - 1] = top_grads.into_iter().next();
        let mut losses = vec![0.0; self.sgs.len()];
        let mut grads: Vec<Option<SgGrads>> = vec![None; self.sgs.len()];
        for (j, slot) in self.sgs.iter().enumerate().rev() {
            let k = slot.boundary;
            let h = pass.h(k);
            let target = delivered.scale(n);
            let (l, g) = slot.module.loss_and_grads(h, y, &target)?;
            losses[j] = l;
            grads[j] = Some(g);
            let upstream = if self.config.oracle_sg {
                delivered
            } else {
                let ctx = SignalContext {
                    grad_h: Some(&target),
                    sg: Some(&slot.module),
                    ..Default::default()
                };
                conspiring_signal(&method, h, y, &ctx)?.scale(1.0 / n)
            };
            let (below, bg) = self.net.backward_range(pass, k - 1, k, &upstream)?;
            blocks[k - 1] = bg.into_iter().next();
            delivered = below;
        }
        Ok((
            blocks.into_iter().map(|b| b.expect("every block visited")).collect(),
            losses,
            grads.into_iter().map(|g| g.expect("every SG visited")).collect(),
        ))
    }

    fn feedback_alignment(&self, pass: &ForwardPass, y: &Matrix, top: &Matrix) -> Result<Vec<BlockGrads>> {
        let depth = self.net.depth();
        let mut blocks = Vec::with_capacity(depth);
        let mut upstream = top.clone();
        for i in (0..depth).rev() {
            let (g, bg) = self.net.blocks[i].backward_to_pre(&pass.caches[i], &upstream)?;
            blocks.push(bg);
            if i > 0 {
                let ctx = SignalContext {
                    grad_next: Some(&g),
                    ..Default::default()
                };
                upstream = conspiring_signal(&self.feedback[i - 1], pass.h(i), y, &ctx)?;
            }
        }
        blocks.reverse();
        Ok(blocks)
    }

    fn direct_feedback(&self, pass: &ForwardPass, y: &Matrix, top: &Matrix) -> Result<Vec<BlockGrads>> {
        let depth = self.net.depth();
        let mut blocks = Vec::with_capacity(depth);
        let ctx = SignalContext {
            grad_output: Some(top),
            ..Default::default()
        };
        for k in 1..depth {
            let signal = conspiring_signal(&self.feedback[k - 1], pass.h(k), y, &ctx)?;
            blocks.extend(self.net.backward_range(pass, k - 1, k, &signal)?.1);
        }
        blocks.extend(self.net.backward_range(pass, depth - 1, depth, top)?.1);
        Ok(blocks)
    }

    pub fn apply_block(&mut self, i: usize, grads: &BlockGrads) -> Result<()> {
        let l2 = self.config.l2_penalty;
        self.net.blocks[i].apply(grads, l2, &format!("block{i}"))
    }

    pub fn apply_sg(&mut self, j: usize, grads: &SgGrads) -> Result<()> {
        self.sgs[j].module.apply(grads, &format!("sg{j}"))
    }

    /// Applies a whole step, folds batch-norm statistics and advances the
    /// iteration counter.
    pub fn apply(&mut self, grads: &StepGrads, pass: &ForwardPass) -> Result<()> {
        for (i, g) in grads.blocks.iter().enumerate() {
            self.apply_block(i, g)?;
        }
        for (j, g) in grads.sgs.iter().enumerate() {
            self.apply_sg(j, g)?;
        }
        self.finish_step(pass);
        Ok(())
    }

    pub fn finish_step(&mut self, pass: &ForwardPass) {
        self.net.commit(pass);
        self.iteration += 1;
    }

    /// Forward, gradients and update on one batch.
    pub fn step(&mut self, x: &Matrix, y: &Matrix) -> Result<StepOutcome> {
        let pass = self.net.forward(x, Mode::Train)?;
        let (grads, outcome) = self.grads_from_pass(&pass, y)?;
        self.apply(&grads, &pass)?;
        Ok(outcome)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "iteration": self.iteration,
            "spec": self.spec,
            "config": self.config,
        });
        let mut ck = Checkpoint::new(serde_json::to_string(&meta)?);
        ck.extend(self.net.named_tensors())?;
        for (j, slot) in self.sgs.iter().enumerate() {
            ck.extend(slot.module.named_tensors(&format!("sg{j}")))?;
        }
        Ok(ck)
    }

    /// Restores a trainer saved by [`Trainer::to_checkpoint`]. The stored
    /// spec must match; the config may differ (e.g. a larger budget).
    pub fn from_checkpoint(spec: NetworkSpec, config: TrainConfig, ck: &Checkpoint) -> Result<Self> {
        let meta: serde_json::Value = serde_json::from_str(&ck.meta)?;
        let stored: NetworkSpec = serde_json::from_value(meta["spec"].clone())?;
        if stored != spec {
            return Err(Error::Checkpoint("network spec differs from the checkpoint".into()));
        }
        let stored_seed = meta["config"]["seed"].as_u64();
        if stored_seed != Some(config.seed) {
            return Err(Error::Checkpoint(format!("checkpoint seed {stored_seed:?} differs from {}", config.seed)));
        }
        let iteration = meta["iteration"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("meta has no iteration".into()))? as usize;
        let mut t = Trainer::new(spec, config)?;
        let lookup = ck.lookup();
        t.net.load_named(&lookup)?;
        for (j, slot) in t.sgs.iter_mut().enumerate() {
            slot.module.load_named(&format!("sg{j}"), &lookup)?;
        }
        t.net.set_lr(t.config.lr_main);
        let lr_sg = t.config.lr_sg;
        t.sgs.iter_mut().for_each(|s| s.module.set_lr(lr_sg));
        t.iteration = iteration;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Architecture, LossKind};
    use crate::sg::SgKind;

    fn arch(dims: &[usize], act: Option<Activation>, bn: bool, loss: LossKind) -> Architecture {
        Architecture {
            layer_dims: dims.to_vec(),
            activation: act,
            batchnorm: bn,
            order: Default::default(),
            loss,
        }
    }

    fn batch(seed: u64, n: usize, d: usize, c: usize) -> (Matrix, Matrix) {
        let mut rng = Rng::new(seed);
        let x = Matrix::gaussian(&mut rng, n, d);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        (x, crate::data::one_hot(&labels, c))
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let mut seen: Vec<usize> = (0..4).flat_map(|t| batch_indices(20, 5, 3, t)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
        assert_eq!(batch_indices(20, 5, 3, 6), batch_indices(20, 5, 3, 6));
        assert_eq!(batch_indices(10, 50, 3, 7), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn zero_sg_leaves_lower_segment_untouched_at_first_step() {
        let a = arch(&[4, 6, 6, 6, 3], Some(Activation::Relu), true, LossKind::LogLoss);
        let mut t = Trainer::new(NetworkSpec::single_sg(a, SgKind::Linear, None), TrainConfig::default()).unwrap();
        let before = t.net.clone();
        let (x, y) = batch(1, 8, 4, 3);
        t.step(&x, &y).unwrap();
        let k = t.sgs[0].boundary;
        assert_eq!(k, 2);
        for i in 0..k {
            assert_eq!(t.net.blocks[i].dense.w.value, before.blocks[i].dense.w.value);
        }
        for i in k..4 {
            assert_ne!(t.net.blocks[i].dense.w.value, before.blocks[i].dense.w.value);
        }
    }

    #[test]
    fn every_layer_first_step_moves_only_the_top() {
        let a = arch(&[3, 5, 5, 5, 2], Some(Activation::Relu), false, LossKind::Mse);
        let mut t = Trainer::new(NetworkSpec::every_layer_sg(a, SgKind::Linear), TrainConfig::default()).unwrap();
        let before = t.clone();
        let (x, y) = batch(2, 6, 3, 2);
        t.step(&x, &y).unwrap();
        for i in 0..3 {
            assert_eq!(t.net.blocks[i].dense.w.value, before.net.blocks[i].dense.w.value, "block {i}");
        }
        assert_ne!(t.net.blocks[3].dense.w.value, before.net.blocks[3].dense.w.value);
        for j in 0..2 {
            let (now, then) = (&t.sgs[j].module, &before.sgs[j].module);
            assert_eq!(now.a.as_ref().unwrap().value, then.a.as_ref().unwrap().value, "sg {j}");
            assert_eq!(now.b.as_ref().unwrap().value, then.b.as_ref().unwrap().value, "sg {j}");
            assert_eq!(now.c.value, then.c.value, "sg {j}");
        }
        assert_ne!(t.sgs[2].module.c.value, before.sgs[2].module.c.value);
    }

    #[test]
    fn oracle_sg_is_backprop() {
        for placement_every in [false, true] {
            let a = arch(&[4, 6, 6, 3], Some(Activation::Sigmoid), true, LossKind::LogLoss);
            let cfg = TrainConfig {
                oracle_sg: true,
                ..Default::default()
            };
            let spec = if placement_every {
                NetworkSpec::every_layer_sg(a.clone(), SgKind::Linear)
            } else {
                NetworkSpec::single_sg(a.clone(), SgKind::Linear, None)
            };
            let mut sg = Trainer::new(spec, cfg.clone()).unwrap();
            let mut bp = Trainer::new(NetworkSpec::backprop(a), cfg).unwrap();
            for s in 0..5 {
                let (x, y) = batch(10 + s, 7, 4, 3);
                sg.step(&x, &y).unwrap();
                bp.step(&x, &y).unwrap();
            }
            assert_eq!(sg.net, bp.net);
        }
    }

    #[test]
    fn lower_update_ignores_upper_parameters() {
        let a = arch(&[3, 5, 5, 5, 2], Some(Activation::Relu), false, LossKind::Mse);
        let mut t = Trainer::new(NetworkSpec::single_sg(a, SgKind::Linear, None), TrainConfig::default()).unwrap();
        let mut rng = Rng::new(7);
        t.sgs[0].module.a.as_mut().unwrap().value = Matrix::gaussian(&mut rng, 5, 5);
        let (x, y) = batch(3, 6, 3, 2);
        let pass = t.net.forward(&x, Mode::Train).unwrap();
        let (g1, _) = t.grads_from_pass(&pass, &y).unwrap();
        let mut zeroed = t.clone();
        for b in &mut zeroed.net.blocks[2..] {
            b.dense.w.value = Matrix::zeros(5, b.dense.out_dim());
            b.dense.b.value = Matrix::zeros(1, b.dense.out_dim());
        }
        let (g2, _) = zeroed.grads_from_pass(&pass, &y).unwrap();
        assert_eq!(g1.blocks[..2], g2.blocks[..2]);
        assert_ne!(g1.blocks[2..], g2.blocks[2..]);
    }

    #[test]
    fn update_order_does_not_matter() {
        let a = arch(&[3, 4, 4, 2], Some(Activation::Relu), true, LossKind::Mse);
        let mut t = Trainer::new(NetworkSpec::single_sg(a, SgKind::Linear, Some(1)), TrainConfig::default()).unwrap();
        let (x, y) = batch(4, 6, 3, 2);
        for _ in 0..3 {
            t.step(&x, &y).unwrap();
        }
        let pass = t.net.forward(&x, Mode::Train).unwrap();
        let (grads, _) = t.grads_from_pass(&pass, &y).unwrap();
        let mut forward_order = t.clone();
        forward_order.apply(&grads, &pass).unwrap();
        let mut reversed = t.clone();
        reversed.apply_sg(0, &grads.sgs[0]).unwrap();
        for i in (0..3).rev() {
            reversed.apply_block(i, &grads.blocks[i]).unwrap();
        }
        reversed.finish_step(&pass);
        assert_eq!(forward_order, reversed);
    }

    #[test]
    fn backprop_step_matches_network_backward() {
        let a = arch(&[3, 4, 2], Some(Activation::Relu), false, LossKind::Mse);
        let t = Trainer::new(NetworkSpec::backprop(a), TrainConfig::default()).unwrap();
        let (x, y) = batch(5, 5, 3, 2);
        let pass = t.net.forward(&x, Mode::Train).unwrap();
        let (grads, _) = t.grads_from_pass(&pass, &y).unwrap();
        assert_eq!(grads.blocks, t.net.backward(&pass, &y).unwrap().1);
    }

    #[test]
    fn perfect_fit_leaves_parameters_unchanged() {
        let a = arch(&[2, 2], None, false, LossKind::Mse);
        let mut t = Trainer::new(NetworkSpec::backprop(a), TrainConfig::default()).unwrap();
        t.net.blocks[0].dense.w.value = Matrix::identity(2);
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let before = t.net.clone();
        let out = t.step(&x, &x.clone()).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(t.net.blocks[0].dense.w.value, before.blocks[0].dense.w.value);
        assert_eq!(t.net.blocks[0].dense.b.value, before.blocks[0].dense.b.value);
    }

    #[test]
    fn kickback_matches_dfa_with_ones() {
        let a = arch(&[3, 4, 4, 2], Some(Activation::Relu), false, LossKind::LogLoss);
        let spec = NetworkSpec::backprop(a.clone());
        let mut kb = Trainer::new(spec.clone().with_method(MethodKind::Kickback), TrainConfig::default()).unwrap();
        let ones = vec![GradientMethod::dfa(Matrix::filled(4, 2, 1.0)); 2];
        let mut dfa = Trainer::new(spec.clone().with_method(MethodKind::Dfa), TrainConfig::default())
            .unwrap()
            .with_feedback(ones)
            .unwrap();
        let mut from_spec = NetworkSpec {
            feedback: FeedbackInit::Ones,
            ..spec.with_method(MethodKind::Dfa)
        };
        let mut dfa_spec = Trainer::new(from_spec.clone(), TrainConfig::default()).unwrap();
        for s in 0..4 {
            let (x, y) = batch(20 + s, 6, 3, 2);
            let out = kb.step(&x, &y).unwrap();
            assert_eq!(out, dfa.step(&x, &y).unwrap());
            assert_eq!(out, dfa_spec.step(&x, &y).unwrap());
        }
        assert_eq!(kb.net, dfa.net);
        assert_eq!(kb.net, dfa_spec.net);
        from_spec.feedback = FeedbackInit::Random;
        assert_ne!(Trainer::new(from_spec, TrainConfig::default()).unwrap().feedback, dfa_spec.feedback);
    }

    #[test]
    fn checkpoint_round_trip_restores_state() {
        let a = arch(&[3, 4, 4, 2], Some(Activation::Relu), true, LossKind::LogLoss);
        let spec = NetworkSpec::single_sg(a, SgKind::Sigmoid, None);
        let cfg = TrainConfig::default();
        let mut t = Trainer::new(spec.clone(), cfg.clone()).unwrap();
        let (x, y) = batch(6, 6, 3, 2);
        for _ in 0..3 {
            t.step(&x, &y).unwrap();
        }
        let ck = t.to_checkpoint().unwrap();
        let bytes = ck.to_bytes();
        let back = Trainer::from_checkpoint(spec, cfg, &Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_checkpoint().unwrap().to_bytes(), bytes);
    }

    #[test]
    fn eps_monitor_is_exact_for_oracle_and_full_for_zero_sg() {
        let a = arch(&[3, 4, 4, 2], None, false, LossKind::Mse);
        let mon = TrainConfig {
            eps_monitor: true,
            ..Default::default()
        };
        let (x, y) = batch(8, 6, 3, 2);
        let mut zero = Trainer::new(NetworkSpec::single_sg(a.clone(), SgKind::Linear, None), mon.clone()).unwrap();
        let e = zero.step(&x, &y).unwrap().eps.unwrap();
        assert!((e.eps_ratio.unwrap() - 1.0).abs() < 1e-12);
        let oracle = TrainConfig { oracle_sg: true, ..mon };
        let mut t = Trainer::new(NetworkSpec::single_sg(a, SgKind::Linear, None), oracle).unwrap();
        let e = t.step(&x, &y).unwrap().eps.unwrap();
        assert_eq!(e.eps_ratio, Some(0.0));
    }
}
