use serde::{Deserialize, Serialize};

use crate::linalg::{derive_seed, Matrix};
use crate::network::{loss_backward, AdamConfig, Dense, LossKind};
use crate::trainer::batch_indices;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            steps: 2000,
            lr: 1e-3,
            batch_size: 256,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Training accuracy (classifier) or mean squared error per entry
    /// (regressor), measured on the full probe set after fitting.
    pub value: f64,
    /// Every feature column was constant.
    pub degenerate: bool,
}

fn degenerate(features: &Matrix) -> bool {
    (0..features.cols()).all(|j| (1..features.rows()).all(|i| features.get(i, j) == features.get(0, j)))
}

/// Fits a zero-initialised affine map on frozen features with Adam.
fn fit(features: &Matrix, targets: &Matrix, loss: LossKind, cfg: &ProbeConfig) -> Result<Dense> {
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut layer = Dense::from_params(
        Matrix::zeros(features.cols(), targets.cols()),
        Matrix::zeros(1, targets.cols()),
        adam,
    );
    let seed = derive_seed(cfg.seed, 0x9b0e);
    for t in 0..cfg.steps {
        let idx = batch_indices(features.rows(), cfg.batch_size, seed, t);
        let (x, y) = (features.select_rows(&idx), targets.select_rows(&idx));
        let (out, cache) = layer.forward(&x)?;
        let (_, grads) = layer.backward(&cache, &loss_backward(loss, &out, &y)?)?;
        layer.w.step(&grads.w, "probe.w")?;
        layer.b.step(&grads.b, "probe.b")?;
    }
    Ok(layer)
}

/// Softmax-linear classifier on frozen activations; returns its training
/// accuracy. The probed network is never touched.
pub fn linear_probe_classifier(features: &Matrix, labels: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let targets = crate::data::one_hot(labels, classes);
    let layer = fit(features, &targets, LossKind::LogLoss, cfg)?;
    let pred = layer.forward(features)?.0.argmax_rows();
    let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(ProbeResult {
        value: correct as f64 / labels.len().max(1) as f64,
        degenerate: degenerate(features),
    })
}

/// Linear regressor from activations to `targets` (typically the network
/// input); returns the mean squared error per entry.
pub fn linear_probe_regressor(features: &Matrix, targets: &Matrix, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let layer = fit(features, targets, LossKind::Mse, cfg)?;
    let diff = layer.forward(features)?.0.sub(targets)?;
    Ok(ProbeResult {
        value: diff.sum_sq() / diff.len().max(1) as f64,
        degenerate: degenerate(features),
    })
}
