//! Batch-mean losses.
//!
//! Both losses average over the rows of the batch: `mse = (1/n) Σ ½‖y−p‖²`
//! and `logloss = (1/n) Σ −log softmax(p)·y`. `loss_backward` returns the
//! gradient of that mean, so a per-sample gradient is `n` times a row of it.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    #[serde(alias = "log", alias = "log-loss")]
    LogLoss,
}

/// Row-wise softmax with the max-shift for stability.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn check(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            op: "loss",
            left: pred.shape(),
            right: target.shape(),
        });
    }
    if kind == LossKind::LogLoss {
        for r in 0..target.rows() {
            let row = target.row(r);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::NotOneHot { row: r });
            }
        }
    }
    Ok(())
}

/// Loss of every row separately.
pub fn per_sample_loss(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<Vec<f64>> {
    check(kind, pred, target)?;
    Ok((0..pred.rows())
        .map(|r| {
            let (p, y) = (pred.row(r), target.row(r));
            match kind {
                LossKind::Mse => 0.5 * p.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum::<f64>(),
                LossKind::LogLoss => {
                    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + p.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    p.iter().zip(y).map(|(a, b)| b * (lse - a)).sum()
                }
            }
        })
        .collect())
}

pub fn loss_forward(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<f64> {
    let per = per_sample_loss(kind, pred, target)?;
    Ok(per.iter().sum::<f64>() / pred.rows().max(1) as f64)
}

/// Gradient of the batch-mean loss with respect to `pred`.
pub fn loss_backward(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    check(kind, pred, target)?;
    let inv_n = 1.0 / pred.rows().max(1) as f64;
    let raw = match kind {
        LossKind::Mse => pred.sub(target)?,
        LossKind::LogLoss => softmax(pred).sub(target)?,
    };
    Ok(raw.scale(inv_n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    #[test]
    fn mse_values() {
        let p = Matrix::from_rows(&[[0.3, -1.0]]).unwrap();
        assert_eq!(loss_forward(LossKind::Mse, &p, &p).unwrap(), 0.0);
        let z = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(loss_forward(LossKind::Mse, &z, &y).unwrap(), 0.5);
    }

    #[test]
    fn logloss_rejects_soft_targets() {
        let p = Matrix::zeros(2, 3);
        let y = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.5, 0.5, 0.0]]).unwrap();
        assert!(matches!(
            loss_forward(LossKind::LogLoss, &p, &y),
            Err(Error::NotOneHot { row: 1 })
        ));
    }

    #[test]
    fn logloss_of_uniform_logits() {
        let p = Matrix::zeros(1, 4);
        let y = Matrix::from_rows(&[[0.0, 0.0, 1.0, 0.0]]).unwrap();
        assert!((loss_forward(LossKind::LogLoss, &p, &y).unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = Rng::new(4);
        let logits = Matrix::gaussian(&mut rng, 8, 6).scale(30.0);
        let s = softmax(&logits);
        for r in 0..s.rows() {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
