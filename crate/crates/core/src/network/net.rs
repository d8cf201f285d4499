use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Rng};
use crate::network::adam::{AdamConfig, Param};
use crate::network::layers::{
    Activation, ActivationCache, BatchNorm, BatchNormCache, BatchNormGrads, Dense, DenseCache, DenseGrads, Mode,
};
use crate::network::loss::{loss_backward, loss_forward, LossKind};
use crate::{Error, Result};

/// Where batch normalisation sits relative to the nonlinearity in a hidden
/// block. The default normalises the dense output before the activation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockOrder {
    #[default]
    NormThenAct,
    ActThenNorm,
}

/// Shape of a feed-forward network: `layer_dims = [d_in, h_1, ..., d_out]`.
///
/// Every block but the last is `Dense -> [BatchNorm] -> [Activation]`; the
/// last block is a plain dense layer producing the loss input `p`. Leaving
/// `activation` empty gives a (deep) linear model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub activation: Option<Activation>,
    #[serde(default)]
    pub batchnorm: bool,
    #[serde(default)]
    pub order: BlockOrder,
    pub loss: LossKind,
}

impl Architecture {
    pub fn depth(&self) -> usize {
        self.layer_dims.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Invalid("layer_dims needs at least an input and an output size".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Invalid("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Post {
    Norm(BatchNorm),
    Act(Activation),
}

#[derive(Clone, Debug)]
enum PostCache {
    Norm(BatchNormCache),
    Act(ActivationCache),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub dense: Dense,
    pub post: Vec<Post>,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    dense: DenseCache,
    post: Vec<PostCache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrads {
    pub dense: DenseGrads,
    pub norm: Option<BatchNormGrads>,
}

impl BlockGrads {
    pub fn sum_sq(&self) -> f64 {
        self.dense.w.sum_sq()
            + self.dense.b.sum_sq()
            + self.norm.as_ref().map_or(0.0, |n| n.gamma.sum_sq() + n.beta.sum_sq())
    }

    pub fn add_assign(&mut self, other: &BlockGrads) -> Result<()> {
        self.dense.w.add_assign(&other.dense.w)?;
        self.dense.b.add_assign(&other.dense.b)?;
        if let (Some(a), Some(b)) = (self.norm.as_mut(), other.norm.as_ref()) {
            a.gamma.add_assign(&b.gamma)?;
            a.beta.add_assign(&b.beta)?;
        }
        Ok(())
    }

    pub fn sub(&self, other: &BlockGrads) -> Result<BlockGrads> {
        Ok(BlockGrads {
            dense: DenseGrads {
                w: self.dense.w.sub(&other.dense.w)?,
                b: self.dense.b.sub(&other.dense.b)?,
            },
            norm: match (&self.norm, &other.norm) {
                (Some(a), Some(b)) => Some(BatchNormGrads {
                    gamma: a.gamma.sub(&b.gamma)?,
                    beta: a.beta.sub(&b.beta)?,
                }),
                _ => None,
            },
        })
    }
}

impl Block {
    pub fn forward(&self, input: &Matrix, mode: Mode) -> Result<(Matrix, BlockCache)> {
        let (mut x, dense) = self.dense.forward(input)?;
        let mut post = Vec::with_capacity(self.post.len());
        for op in &self.post {
            match op {
                Post::Norm(bn) => {
                    let (y, c) = bn.forward(&x, mode)?;
                    post.push(PostCache::Norm(c));
                    x = y;
                }
                Post::Act(act) => {
                    let (y, c) = act.forward(&x);
                    post.push(PostCache::Act(c));
                    x = y;
                }
            }
        }
        Ok((x, BlockCache { dense, post }))
    }

    /// Gradient with respect to the dense output (the pre-activation `g`),
    /// plus the batch-norm parameter gradients if the block has one.
    pub fn backward_post(&self, cache: &BlockCache, upstream: &Matrix) -> Result<(Matrix, Option<BatchNormGrads>)> {
        if cache.post.len() != self.post.len() {
            return Err(Error::MissingCache("block"));
        }
        let mut g = upstream.clone();
        let mut norm = None;
        for (op, c) in self.post.iter().zip(&cache.post).rev() {
            match (op, c) {
                (Post::Norm(bn), PostCache::Norm(c)) => {
                    let (gi, grads) = bn.backward(c, &g)?;
                    norm = Some(grads);
                    g = gi;
                }
                (Post::Act(act), PostCache::Act(c)) => g = act.backward(c, &g)?,
                _ => return Err(Error::MissingCache("block")),
            }
        }
        Ok((g, norm))
    }

    pub fn backward(&self, cache: &BlockCache, upstream: &Matrix) -> Result<(Matrix, BlockGrads)> {
        let (g, norm) = self.backward_post(cache, upstream)?;
        let (input_grad, dense) = self.dense.backward(&cache.dense, &g)?;
        Ok((input_grad, BlockGrads { dense, norm }))
    }

    /// Parameter gradients together with the gradient at the pre-activation
    /// `g`, for methods that replace `Wᵀ` in the signal sent further down.
    pub fn backward_to_pre(&self, cache: &BlockCache, upstream: &Matrix) -> Result<(Matrix, BlockGrads)> {
        let (g, norm) = self.backward_post(cache, upstream)?;
        let (_, dense) = self.dense.backward(&cache.dense, &g)?;
        Ok((g, BlockGrads { dense, norm }))
    }

    pub fn norm(&self) -> Option<&BatchNorm> {
        self.post.iter().find_map(|p| match p {
            Post::Norm(bn) => Some(bn),
            Post::Act(_) => None,
        })
    }

    fn norm_mut(&mut self) -> Option<&mut BatchNorm> {
        self.post.iter_mut().find_map(|p| match p {
            Post::Norm(bn) => Some(bn),
            Post::Act(_) => None,
        })
    }

    fn commit(&mut self, cache: &BlockCache) {
        for (op, c) in self.post.iter_mut().zip(&cache.post) {
            if let (Post::Norm(bn), PostCache::Norm(c)) = (op, c) {
                bn.commit(c);
            }
        }
    }

    /// Adam step on every parameter of the block; `l2` adds `l2 * W` to the
    /// dense weight gradient.
    pub fn apply(&mut self, grads: &BlockGrads, l2: f64, name: &str) -> Result<()> {
        if l2 > 0.0 {
            let mut gw = grads.dense.w.clone();
            gw.axpy(l2, &self.dense.w.value)?;
            self.dense.w.step(&gw, &format!("{name}.dense.w"))?;
        } else {
            self.dense.w.step(&grads.dense.w, &format!("{name}.dense.w"))?;
        }
        self.dense.b.step(&grads.dense.b, &format!("{name}.dense.b"))?;
        if let (Some(bn), Some(g)) = (self.norm_mut(), grads.norm.as_ref()) {
            bn.gamma.step(&g.gamma, &format!("{name}.bn.gamma"))?;
            bn.beta.step(&g.beta, &format!("{name}.bn.beta"))?;
        }
        Ok(())
    }

    fn params(&self) -> Vec<(&'static str, &Param)> {
        let mut out: Vec<(&'static str, &Param)> = vec![("dense.w", &self.dense.w), ("dense.b", &self.dense.b)];
        if let Some(bn) = self.norm() {
            out.push(("bn.gamma", &bn.gamma));
            out.push(("bn.beta", &bn.beta));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        let mut out: Vec<(&'static str, &mut Param)> = vec![("dense.w", &mut self.dense.w), ("dense.b", &mut self.dense.b)];
        if let Some(bn) = self.post.iter_mut().find_map(|p| match p {
            Post::Norm(bn) => Some(bn),
            Post::Act(_) => None,
        }) {
            out.push(("bn.gamma", &mut bn.gamma));
            out.push(("bn.beta", &mut bn.beta));
        }
        out
    }
}

/// Activations `h^0 .. h^N` and per-block caches of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub activations: Vec<Matrix>,
    pub caches: Vec<BlockCache>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("forward pass holds the input")
    }

    /// `h^k`; `h^0` is the input.
    pub fn h(&self, k: usize) -> &Matrix {
        &self.activations[k]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub arch: Architecture,
    pub blocks: Vec<Block>,
}

impl Network {
    pub fn new(arch: Architecture, rng: &mut Rng, adam: AdamConfig) -> Result<Self> {
        arch.validate()?;
        let depth = arch.depth();
        let mut blocks = Vec::with_capacity(depth);
        for i in 0..depth {
            let (din, dout) = (arch.layer_dims[i], arch.layer_dims[i + 1]);
            let dense = Dense::new(din, dout, rng, adam);
            let mut post = Vec::new();
            if i + 1 < depth {
                let norm = arch.batchnorm.then(|| Post::Norm(BatchNorm::new(dout, adam)));
                let act = arch.activation.map(Post::Act);
                match arch.order {
                    BlockOrder::NormThenAct => post.extend(norm.into_iter().chain(act)),
                    BlockOrder::ActThenNorm => post.extend(act.into_iter().chain(norm)),
                }
            }
            blocks.push(Block { dense, post });
        }
        Ok(Network { arch, blocks })
    }

    /// Number of blocks `N`.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn loss_kind(&self) -> LossKind {
        self.arch.loss
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<ForwardPass> {
        let mut activations = Vec::with_capacity(self.depth() + 1);
        let mut caches = Vec::with_capacity(self.depth());
        activations.push(x.clone());
        for block in &self.blocks {
            let (y, c) = block.forward(activations.last().unwrap(), mode)?;
            activations.push(y);
            caches.push(c);
        }
        Ok(ForwardPass { activations, caches })
    }

    /// Eval-mode output of the whole network.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward(&h, Mode::Eval)?.0;
        }
        Ok(h)
    }

    pub fn loss(&self, pass: &ForwardPass, y: &Matrix) -> Result<f64> {
        loss_forward(self.arch.loss, pass.output(), y)
    }

    pub fn loss_grad(&self, pass: &ForwardPass, y: &Matrix) -> Result<Matrix> {
        loss_backward(self.arch.loss, pass.output(), y)
    }

    /// Backpropagates `upstream = dL/dh^hi` through blocks `lo..hi`,
    /// returning `dL/dh^lo` and the gradients of those blocks in order.
    pub fn backward_range(&self, pass: &ForwardPass, lo: usize, hi: usize, upstream: &Matrix) -> Result<(Matrix, Vec<BlockGrads>)> {
        if lo > hi || hi > self.depth() {
            return Err(Error::Invalid(format!("block range {lo}..{hi} outside 0..{}", self.depth())));
        }
        if pass.caches.len() != self.depth() {
            return Err(Error::MissingCache("network"));
        }
        let mut g = upstream.clone();
        let mut grads = Vec::with_capacity(hi - lo);
        for i in (lo..hi).rev() {
            let (gi, bg) = self.blocks[i].backward(&pass.caches[i], &g)?;
            grads.push(bg);
            g = gi;
        }
        grads.reverse();
        Ok((g, grads))
    }

    /// Full backprop: `dL/dx` and every block's gradients.
    pub fn backward(&self, pass: &ForwardPass, y: &Matrix) -> Result<(Matrix, Vec<BlockGrads>)> {
        let g = self.loss_grad(pass, y)?;
        self.backward_range(pass, 0, self.depth(), &g)
    }

    /// Folds train-mode batch statistics into the running estimates.
    pub fn commit(&mut self, pass: &ForwardPass) {
        for (b, c) in self.blocks.iter_mut().zip(&pass.caches) {
            b.commit(c);
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        for b in &mut self.blocks {
            for (_, p) in b.params_mut() {
                p.set_lr(lr);
            }
        }
    }

    /// Squared Frobenius norm of every dense weight matrix.
    pub fn weight_sq_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.dense.w.value.sum_sq()).collect()
    }

    /// Every parameter, optimiser moment and batch-norm buffer, by name.
    pub fn named_tensors(&self) -> Vec<(String, Matrix)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            for (name, p) in block.params() {
                push_param(&mut out, &format!("block{i}.{name}"), p);
            }
            if let Some(bn) = block.norm() {
                out.push((format!("block{i}.bn.running_mean"), bn.running_mean.clone()));
                out.push((format!("block{i}.bn.running_var"), bn.running_var.clone()));
            }
        }
        out
    }

    pub fn load_named(&mut self, lookup: &dyn Fn(&str) -> Option<Matrix>) -> Result<()> {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (name, p) in block.params_mut() {
                load_param(lookup, &format!("block{i}.{name}"), p)?;
            }
            if let Some(bn) = block.norm_mut() {
                bn.running_mean = fetch(lookup, &format!("block{i}.bn.running_mean"), bn.running_mean.shape())?;
                bn.running_var = fetch(lookup, &format!("block{i}.bn.running_var"), bn.running_var.shape())?;
            }
        }
        Ok(())
    }
}

pub(crate) fn push_param(out: &mut Vec<(String, Matrix)>, name: &str, p: &Param) {
    out.push((name.to_string(), p.value.clone()));
    out.push((format!("{name}.adam_m"), p.adam.m.clone()));
    out.push((format!("{name}.adam_v"), p.adam.v.clone()));
    out.push((format!("{name}.adam_t"), Matrix::row_vector(vec![p.adam.t as f64])));
}

pub(crate) fn load_param(lookup: &dyn Fn(&str) -> Option<Matrix>, name: &str, p: &mut Param) -> Result<()> {
    let shape = p.value.shape();
    p.value = fetch(lookup, name, shape)?;
    p.adam.m = fetch(lookup, &format!("{name}.adam_m"), shape)?;
    p.adam.v = fetch(lookup, &format!("{name}.adam_v"), shape)?;
    p.adam.t = fetch(lookup, &format!("{name}.adam_t"), (1, 1))?.get(0, 0) as u64;
    Ok(())
}

pub(crate) fn fetch(lookup: &dyn Fn(&str) -> Option<Matrix>, name: &str, shape: (usize, usize)) -> Result<Matrix> {
    let m = lookup(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
    if m.shape() != shape {
        return Err(Error::Checkpoint(format!(
            "tensor {name} has shape {:?}, network expects {shape:?}",
            m.shape()
        )));
    }
    Ok(m)
}
