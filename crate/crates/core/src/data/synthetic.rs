use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetKind, Provenance};
use crate::linalg::{Matrix, Rng};
use crate::{Error, Result};

/// Default sample count: 100 for k = 2, 1000 for k = 100, else max(100, 10k).
pub fn default_size(k: usize) -> usize {
    match k {
        2 => 100,
        100 => 1000,
        _ => (10 * k).max(100),
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Invalid("dimension k must be at least 1".into()));
    }
    Ok(())
}

/// Class 1 on the non-negative side of the hyperplane through the origin.
fn side(x: &Matrix, normal: &[f64]) -> Vec<usize> {
    (0..x.rows())
        .map(|i| {
            let s: f64 = x.row(i).iter().zip(normal).map(|(a, b)| a * b).sum();
            usize::from(s >= 0.0)
        })
        .collect()
}

pub fn gen_linear(k: usize, seed: u64) -> Result<Dataset> {
    check_k(k)?;
    let mut rng = Rng::new(seed);
    let normal: Vec<f64> = (0..k).map(|_| rng.gaussian()).collect();
    let x = Matrix::gaussian(&mut rng, default_size(k), k);
    let labels = side(&x, &normal);
    let mut prov = Provenance::plain(DatasetKind::Linear, k, seed);
    prov.hyperplane = Some(normal);
    Dataset::new(x, labels, 2, prov)
}

/// `gen_linear(k, seed)` with exactly ⌊0.1 n⌋ distinct labels swapped.
pub fn gen_noisy(k: usize, seed: u64) -> Result<Dataset> {
    let mut ds = gen_linear(k, seed)?;
    let n = ds.len();
    let mut flips = Rng::new(seed).child(1).sample_indices(n, n / 10);
    flips.sort_unstable();
    for &i in &flips {
        ds.labels[i] = 1 - ds.labels[i];
    }
    ds.y = super::one_hot(&ds.labels, 2);
    ds.provenance.kind = DatasetKind::Noisy;
    ds.provenance.noise_rate = 0.1;
    ds.provenance.noise_indices = flips;
    Ok(ds)
}

pub fn gen_random(k: usize, seed: u64) -> Result<Dataset> {
    check_k(k)?;
    let mut rng = Rng::new(seed);
    let x = Matrix::gaussian(&mut rng, default_size(k), k);
    let labels = (0..x.rows()).map(|_| usize::from(rng.bernoulli(0.5))).collect();
    let mut prov = Provenance::plain(DatasetKind::Random, k, seed);
    prov.noise_rate = 1.0;
    Dataset::new(x, labels, 2, prov)
}

pub fn generate(kind: DatasetKind, k: usize, seed: u64) -> Result<Dataset> {
    match kind {
        DatasetKind::Linear => gen_linear(k, seed),
        DatasetKind::Noisy => gen_noisy(k, seed),
        DatasetKind::Random => gen_random(k, seed),
        other => Err(Error::Invalid(format!("{other:?} datasets are not generated"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Labeler {
    /// Hyperplane labels, then ⌊rate·n⌋ points get a fair-coin label.
    LinearWithNoise { rate: f64 },
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridDataset {
    pub resolution: usize,
    pub range: (f64, f64),
    pub labeler: Labeler,
    pub data: Dataset,
}

/// Row-major lattice: point `i·res + j` sits at `(v_j, v_i)`.
pub fn grid_2d(resolution: usize, range: (f64, f64), labeler: Labeler, seed: u64) -> Result<GridDataset> {
    if resolution < 2 {
        return Err(Error::Invalid("grid resolution must be at least 2".into()));
    }
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(Error::Invalid(format!("empty grid range [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (resolution - 1) as f64;
    let axis: Vec<f64> = (0..resolution).map(|i| lo + i as f64 * step).collect();
    let mut data = Vec::with_capacity(2 * resolution * resolution);
    for &v in &axis {
        for &u in &axis {
            data.extend([u, v]);
        }
    }
    let n = resolution * resolution;
    let x = Matrix::from_vec(n, 2, data)?;
    let mut rng = Rng::new(seed);
    let mut prov = Provenance::plain(DatasetKind::Grid, 2, seed);
    let labels = match labeler {
        Labeler::Random => {
            prov.noise_rate = 1.0;
            (0..n).map(|_| usize::from(rng.bernoulli(0.5))).collect()
        }
        Labeler::LinearWithNoise { rate } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Invalid(format!("noise rate {rate} outside [0, 1]")));
            }
            let normal = vec![rng.gaussian(), rng.gaussian()];
            let mut labels = side(&x, &normal);
            let mut noisy = rng.sample_indices(n, (rate * n as f64).floor() as usize);
            noisy.sort_unstable();
            for &i in &noisy {
                labels[i] = usize::from(rng.bernoulli(0.5));
            }
            prov.noise_rate = rate;
            prov.hyperplane = Some(normal);
            prov.noise_indices = noisy;
            labels
        }
    };
    Ok(GridDataset {
        resolution,
        range,
        labeler,
        data: Dataset::new(x, labels, 2, prov)?,
    })
}
