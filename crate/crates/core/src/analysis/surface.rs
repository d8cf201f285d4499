use std::io::Write;
use std::path::Path;

use crate::data::GridDataset;
use crate::linalg::{spearman, Matrix};
use crate::network::{per_sample_loss, Mode};
use crate::sg::{SgKind, SgModule};
use crate::trainer::{NetworkSpec, TrainConfig, Trainer};
use crate::{Error, Result};

/// Per-row loss implied by a linear SG, `½ h A hᵀ + (y B + C) hᵀ`, up to
/// an additive constant (fixed to 0). Ablated and constant modules drop the
/// missing terms.
pub fn reconstruct_loss(sg: &SgModule, h: &Matrix, y: &Matrix) -> Result<Vec<f64>> {
    if sg.kind() == SgKind::Sigmoid {
        return Err(Error::UnsupportedModule {
            op: "reconstruct_loss",
            kind: sg.kind().to_string(),
        });
    }
    if h.cols() != sg.dim_h() || y.cols() != sg.dim_y() || h.rows() != y.rows() {
        return Err(Error::Shape {
            op: "reconstruct_loss",
            left: h.shape(),
            right: y.shape(),
        });
    }
    let mut lin = Matrix::zeros(h.rows(), sg.dim_h()).add_row(&sg.c.value)?;
    if let Some(b) = &sg.b {
        lin.add_assign(&y.matmul(&b.value)?)?;
    }
    if let Some(a) = &sg.a {
        lin.axpy(0.5, &h.matmul(&a.value)?)?;
    }
    Ok((0..h.rows())
        .map(|i| h.row(i).iter().zip(lin.row(i)).map(|(a, b)| a * b).sum())
        .collect())
}

/// True and SG-reconstructed per-point losses at one training iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSurface {
    pub iteration: usize,
    pub points: Matrix,
    pub labels: Vec<usize>,
    pub true_loss: Vec<f64>,
    /// SG boundary and reconstructed losses, one entry per module.
    pub reconstructed: Vec<(usize, Vec<f64>)>,
    /// Spearman correlation of each reconstruction with the true loss;
    /// `None` when either side is constant (e.g. an untrained SG).
    pub spearman: Vec<Option<f64>>,
}

pub fn surface_at(trainer: &Trainer, grid: &GridDataset) -> Result<LossSurface> {
    let data = &grid.data;
    let pass = trainer.net.forward(&data.x, Mode::Eval)?;
    let true_loss = per_sample_loss(trainer.net.loss_kind(), pass.output(), &data.y)?;
    let mut reconstructed = Vec::with_capacity(trainer.sgs.len());
    let mut rho = Vec::with_capacity(trainer.sgs.len());
    for slot in &trainer.sgs {
        let r = reconstruct_loss(&slot.module, pass.h(slot.boundary), &data.y)?;
        rho.push(spearman(&true_loss, &r).ok());
        reconstructed.push((slot.boundary, r));
    }
    Ok(LossSurface {
        iteration: trainer.iteration(),
        points: data.x.clone(),
        labels: data.labels.clone(),
        true_loss,
        reconstructed,
        spearman: rho,
    })
}

/// Trains on the grid and takes a surface at each snapshot iteration.
pub fn loss_surface_experiment(
    spec: &NetworkSpec,
    config: &TrainConfig,
    grid: &GridDataset,
    snapshots: &[usize],
) -> Result<Vec<LossSurface>> {
    if grid.data.dim() != 2 {
        return Err(Error::Invalid("loss surfaces need 2-D inputs".into()));
    }
    if snapshots.windows(2).any(|w| w[0] >= w[1]) || snapshots.last().is_some_and(|&s| s > config.iterations) {
        return Err(Error::Invalid("snapshots must increase and stay within the budget".into()));
    }
    let mut quiet = config.clone();
    quiet.full_eval = false;
    quiet.log_every = usize::MAX;
    let mut trainer = Trainer::new(spec.clone(), quiet)?;
    let mut out = Vec::with_capacity(snapshots.len());
    for &s in snapshots {
        trainer.run(&grid.data, None, s, &mut |_, _| Ok(()))?;
        out.push(surface_at(&trainer, grid)?);
    }
    Ok(out)
}

/// Columns: `iteration,x0,x1,label,true,recon_k<boundary>...`.
pub fn write_surfaces_csv(path: &Path, surfaces: &[LossSurface]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    let mut header = String::from("iteration,x0,x1,label,true");
    if let Some(s) = surfaces.first() {
        for (k, _) in &s.reconstructed {
            header.push_str(&format!(",recon_k{k}"));
        }
    }
    writeln!(f, "{header}").map_err(io)?;
    for s in surfaces {
        for i in 0..s.true_loss.len() {
            let p = s.points.row(i);
            write!(f, "{},{},{},{},{}", s.iteration, p[0], p[1], s.labels[i], s.true_loss[i]).map_err(io)?;
            for (_, r) in &s.reconstructed {
                write!(f, ",{}", r[i]).map_err(io)?;
            }
            writeln!(f).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use crate::network::AdamConfig;

    #[test]
    fn zero_module_reconstructs_zero() {
        let mut rng = Rng::new(1);
        let sg = SgModule::new(SgKind::Linear, 3, 2, AdamConfig::default());
        let h = Matrix::gaussian(&mut rng, 4, 3);
        let y = Matrix::gaussian(&mut rng, 4, 2);
        assert_eq!(reconstruct_loss(&sg, &h, &y).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn gradient_of_half_squared_error_reconstructs_the_loss() {
        // SG(h, y) = h − y is the gradient of ½‖h − y‖² = ½hhᵀ − yhᵀ + ½‖y‖².
        let mut rng = Rng::new(2);
        let mut sg = SgModule::new(SgKind::Linear, 3, 3, AdamConfig::default());
        sg.a.as_mut().unwrap().value = Matrix::identity(3);
        sg.b.as_mut().unwrap().value = Matrix::identity(3).scale(-1.0);
        let h = Matrix::gaussian(&mut rng, 5, 3);
        let y = Matrix::gaussian(&mut rng, 5, 3);
        let r = reconstruct_loss(&sg, &h, &y).unwrap();
        for i in 0..5 {
            let truth: f64 = h.row(i).iter().zip(y.row(i)).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
            let offset: f64 = y.row(i).iter().map(|b| 0.5 * b * b).sum();
            assert!((r[i] - (truth - offset)).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_module_is_unsupported() {
        let sg = SgModule::new(SgKind::Sigmoid, 2, 2, AdamConfig::default());
        let m = Matrix::zeros(1, 2);
        assert!(matches!(reconstruct_loss(&sg, &m, &m), Err(Error::UnsupportedModule { .. })));
    }
}
