//! Datasets: Gaussian classification problems, 2-D lattices and MNIST.

mod idx;
mod synthetic;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Rng};
use crate::{Error, Result};

pub use idx::{load_mnist, read_idx_images, read_idx_labels, IMAGE_MAGIC, LABEL_MAGIC};
pub use synthetic::{default_size, gen_linear, gen_noisy, gen_random, generate, grid_2d, GridDataset, Labeler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Linear,
    Noisy,
    Random,
    Grid,
    Mnist,
    Csv,
}

/// Where a dataset came from, enough to regenerate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: DatasetKind,
    pub k: usize,
    pub seed: u64,
    pub noise_rate: f64,
    /// Normal of the origin-crossing labelling hyperplane, when there is one.
    pub hyperplane: Option<Vec<f64>>,
    /// Indices whose labels were replaced by noise.
    pub noise_indices: Vec<usize>,
}

impl Provenance {
    pub fn plain(kind: DatasetKind, k: usize, seed: u64) -> Self {
        Provenance {
            kind,
            k,
            seed,
            noise_rate: 0.0,
            hyperplane: None,
            noise_indices: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub labels: Vec<usize>,
    pub provenance: Provenance,
}

pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut y = Matrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        y.set(i, l, 1.0);
    }
    y
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>, classes: usize, provenance: Provenance) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::Shape {
                op: "dataset",
                left: x.shape(),
                right: (labels.len(), classes),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Invalid(format!("label {bad} outside {classes} classes")));
        }
        let y = one_hot(&labels, classes);
        Ok(Dataset {
            x,
            y,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn classes(&self) -> usize {
        self.y.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows in the given order; provenance is kept, noise indices dropped.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut provenance = self.provenance.clone();
        provenance.noise_indices.clear();
        Dataset {
            x: self.x.select_rows(indices),
            y: self.y.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance,
        }
    }

    /// A seeded subset of `m` rows in their original order.
    pub fn subset(&self, m: usize, seed: u64) -> Result<Dataset> {
        if m > self.len() {
            return Err(Error::Invalid(format!("subset of {m} from {} rows", self.len())));
        }
        let mut idx = Rng::new(seed).sample_indices(self.len(), m);
        idx.sort_unstable();
        Ok(self.select(&idx))
    }

    /// `count` seeded rows ordered by label (ties by original position).
    pub fn sample_sorted(&self, count: usize, seed: u64) -> Result<Dataset> {
        let sub = self.subset(count, seed)?;
        let mut order: Vec<usize> = (0..sub.len()).collect();
        order.sort_by_key(|&i| sub.labels[i]);
        Ok(sub.select(&order))
    }

    /// Writes `x0..x{d-1},label` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`Dataset::write_csv`]; `classes` defaults to
    /// one more than the largest label.
    pub fn read_csv(path: &Path, classes: Option<usize>) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
        let header = r.headers()?.clone();
        let d = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| {
            Error::Invalid(format!("{}: expected columns x0.., label", path.display()))
        })?;
        if header.get(d) != Some("label") {
            return Err(Error::Invalid(format!("{}: last column must be `label`", path.display())));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Invalid(format!("{}: row {}: bad {what}", path.display(), line + 1));
            for j in 0..d {
                data.push(rec[j].trim().parse::<f64>().map_err(|_| bad("feature"))?);
            }
            labels.push(rec[d].trim().parse::<usize>().map_err(|_| bad("label"))?);
        }
        let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        let x = Matrix::from_vec(labels.len(), d, data)?;
        Dataset::new(x, labels, classes, Provenance::plain(DatasetKind::Csv, d, 0))
    }
}
