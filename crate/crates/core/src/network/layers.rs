use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Rng};
use crate::network::adam::{AdamConfig, Param};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

fn check_cols(op: &'static str, x: &Matrix, expected: usize) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::Shape {
            op,
            left: x.shape(),
            right: (x.rows(), expected),
        });
    }
    Ok(())
}

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Affine map `x W + b` with `W: in x out` and `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Matrix,
}

impl Dense {
    /// Weights drawn from N(0, 1/in_dim), zero bias.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng, adam: AdamConfig) -> Self {
        let w = Matrix::gaussian(rng, in_dim, out_dim).scale(1.0 / (in_dim as f64).sqrt());
        Self::from_params(w, Matrix::zeros(1, out_dim), adam)
    }

    pub fn from_params(w: Matrix, b: Matrix, adam: AdamConfig) -> Self {
        Dense {
            w: Param::new(w, adam),
            b: Param::new(b, adam),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, DenseCache)> {
        check_cols("dense forward", input, self.in_dim())?;
        let out = input.matmul(&self.w.value)?.add_row(&self.b.value)?;
        Ok((
            out,
            DenseCache {
                input: input.clone(),
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &Matrix) -> Result<(Matrix, DenseGrads)> {
        if upstream.rows() != cache.input.rows() {
            return Err(Error::Shape {
                op: "dense backward",
                left: upstream.shape(),
                right: (cache.input.rows(), self.out_dim()),
            });
        }
        check_cols("dense backward", upstream, self.out_dim())?;
        let input_grad = upstream.matmul_t(&self.w.value)?;
        let grads = DenseGrads {
            w: cache.input.t_matmul(upstream)?,
            b: upstream.sum_rows(),
        };
        Ok((input_grad, grads))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Clone, Debug)]
pub struct ActivationCache {
    input: Matrix,
    output: Matrix,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: &Matrix) -> Matrix {
        match self {
            Activation::Relu => x.map(|v| v.max(0.0)),
            Activation::Sigmoid => x.map(sigmoid),
        }
    }

    pub fn forward(self, input: &Matrix) -> (Matrix, ActivationCache) {
        let output = self.apply(input);
        (
            output.clone(),
            ActivationCache {
                input: input.clone(),
                output,
            },
        )
    }

    /// Relu's derivative at exactly zero is taken as 0.
    pub fn backward(self, cache: &ActivationCache, upstream: &Matrix) -> Result<Matrix> {
        check_same("activation backward", upstream, &cache.input)?;
        let mut out = upstream.clone();
        match self {
            Activation::Relu => {
                for (g, &x) in out.data_mut().iter_mut().zip(cache.input.data()) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &s) in out.data_mut().iter_mut().zip(cache.output.data()) {
                    *g *= s * (1.0 - s);
                }
            }
        }
        Ok(out)
    }
}

/// Per-feature batch normalisation with learned scale/shift.
///
/// Train mode normalises with batch statistics (population variance);
/// eval mode uses the running estimates. Running statistics are not
/// touched by `forward`; they are folded in by [`BatchNorm::commit`].
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Matrix,
    pub running_var: Matrix,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    mode: Mode,
    normalized: Matrix,
    inv_std: Matrix,
    batch_mean: Matrix,
    batch_var: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormGrads {
    pub gamma: Matrix,
    pub beta: Matrix,
}

impl BatchNorm {
    pub fn new(dim: usize, adam: AdamConfig) -> Self {
        BatchNorm {
            gamma: Param::new(Matrix::filled(1, dim, 1.0), adam),
            beta: Param::new(Matrix::zeros(1, dim), adam),
            running_mean: Matrix::zeros(1, dim),
            running_var: Matrix::filled(1, dim, 1.0),
            momentum: 0.9,
            eps: 1e-5,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.cols()
    }

    pub fn forward(&self, input: &Matrix, mode: Mode) -> Result<(Matrix, BatchNormCache)> {
        check_cols("batchnorm forward", input, self.dim())?;
        let n = input.rows();
        let (mean, var) = match mode {
            Mode::Train => {
                if n == 0 {
                    return Err(Error::Invalid("batchnorm on an empty batch".into()));
                }
                let mean = input.mean_rows();
                let mut var = Matrix::zeros(1, self.dim());
                for r in 0..n {
                    for (j, (&x, m)) in input.row(r).iter().zip(mean.data()).enumerate() {
                        let d = x - m;
                        var.data_mut()[j] += d * d;
                    }
                }
                (mean, var.scale(1.0 / n as f64))
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std = var.map(|v| 1.0 / (v + self.eps).sqrt());
        let mut normalized = input.clone();
        for r in 0..n {
            for ((x, m), s) in normalized.row_mut(r).iter_mut().zip(mean.data()).zip(inv_std.data()) {
                *x = (*x - m) * s;
            }
        }
        let out = normalized.hadamard_row(&self.gamma.value).add_row(&self.beta.value)?;
        Ok((
            out,
            BatchNormCache {
                mode,
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    pub fn backward(&self, cache: &BatchNormCache, upstream: &Matrix) -> Result<(Matrix, BatchNormGrads)> {
        check_same("batchnorm backward", upstream, &cache.normalized)?;
        let n = upstream.rows() as f64;
        let grads = BatchNormGrads {
            gamma: upstream.hadamard(&cache.normalized)?.sum_rows(),
            beta: upstream.sum_rows(),
        };
        let dxhat = upstream.hadamard_row(&self.gamma.value);
        let input_grad = match cache.mode {
            Mode::Eval => dxhat.hadamard_row(&cache.inv_std),
            Mode::Train => {
                let sum_d = dxhat.sum_rows();
                let sum_dx = dxhat.hadamard(&cache.normalized)?.sum_rows();
                let mut g = dxhat.clone();
                for r in 0..g.rows() {
                    let xh = cache.normalized.row(r).to_vec();
                    for (j, v) in g.row_mut(r).iter_mut().enumerate() {
                        *v = cache.inv_std.data()[j] / n
                            * (n * *v - sum_d.data()[j] - xh[j] * sum_dx.data()[j]);
                    }
                }
                g
            }
        };
        Ok((input_grad, grads))
    }

    /// Folds the batch statistics of a train-mode pass into the running ones.
    pub fn commit(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(cache.batch_mean.data()) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(cache.batch_var.data()) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

trait RowScale {
    fn hadamard_row(&self, row: &Matrix) -> Matrix;
}

impl RowScale for Matrix {
    fn hadamard_row(&self, row: &Matrix) -> Matrix {
        let mut out = self.clone();
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(row.data()).for_each(|(x, s)| *x *= s);
        }
        out
    }
}
