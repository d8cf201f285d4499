//! Measurement instruments: implicit-loss reconstruction from linear SG
//! modules, loss surfaces over 2-D grids, RDMs, linear probes and weight
//! norm profiles.

mod probe;
mod rdm;
mod surface;

pub use probe::{linear_probe_classifier, linear_probe_regressor, ProbeConfig, ProbeResult};
pub use rdm::{compute_rdm, profile_plateau, rdm_distance_profile, Rdm, PLATEAU_HEAD};
pub use surface::{loss_surface_experiment, reconstruct_loss, surface_at, write_surfaces_csv, LossSurface};

use crate::network::Network;

/// Squared Frobenius norms of the hidden-layer weight matrices (every block
/// but the output layer), normalised to sum to 1.
pub fn weight_norm_profile(net: &Network) -> Vec<f64> {
    let hidden = net.depth().saturating_sub(1).max(1).min(net.depth());
    let norms: Vec<f64> = net.weight_sq_norms().into_iter().take(hidden).collect();
    let total: f64 = norms.iter().sum();
    if total == 0.0 {
        return vec![1.0 / norms.len() as f64; norms.len()];
    }
    norms.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, Rng};
    use crate::network::{AdamConfig, Architecture, LossKind};

    #[test]
    fn identical_layers_give_uniform_profile() {
        let arch = Architecture {
            layer_dims: vec![3, 3, 3, 3, 2],
            activation: None,
            batchnorm: false,
            order: Default::default(),
            loss: LossKind::Mse,
        };
        let mut net = Network::new(arch, &mut Rng::new(0), AdamConfig::default()).unwrap();
        for b in &mut net.blocks[..3] {
            b.dense.w.value = Matrix::identity(3);
        }
        let p = weight_norm_profile(&net);
        assert_eq!(p.len(), 3);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        net.blocks[0].dense.w.value = Matrix::filled(3, 3, 2.0);
        assert!((weight_norm_profile(&net).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
