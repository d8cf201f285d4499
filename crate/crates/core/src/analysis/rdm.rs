use crate::linalg::Matrix;
use crate::{Error, Result};

/// Representational dissimilarity matrix, `1 − corr(h_i, h_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rdm {
    pub matrix: Matrix,
    /// Label of each row, used to read class blocks.
    pub labels: Vec<usize>,
}

impl Rdm {
    /// Entries `(i, j)`, `i < j`, whose points share a label.
    pub fn within_class(&self) -> Vec<f64> {
        self.pairs(true)
    }

    pub fn between_class(&self) -> Vec<f64> {
        self.pairs(false)
    }

    fn pairs(&self, same: bool) -> Vec<f64> {
        let n = self.labels.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if (self.labels[i] == self.labels[j]) == same {
                    out.push(self.matrix.get(i, j));
                }
            }
        }
        out
    }

    pub fn mean_within(&self) -> f64 {
        mean(&self.within_class())
    }

    pub fn mean_between(&self) -> f64 {
        mean(&self.between_class())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// RDM of label-ordered activations. A constant row has correlation 0
/// with every other row; the diagonal is exactly 0.
pub fn compute_rdm(activations: &Matrix, labels: &[usize]) -> Result<Rdm> {
    if activations.cols() < 2 {
        return Err(Error::Invalid("RDM needs at least two activation columns".into()));
    }
    if activations.rows() != labels.len() {
        return Err(Error::Shape {
            op: "compute_rdm",
            left: activations.shape(),
            right: (labels.len(), 1),
        });
    }
    let mut z = activations.clone();
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        let m = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|v| *v -= m);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let corr = z.matmul_t(&z)?;
    let n = z.rows();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = (1.0 - corr.get(i, j)).clamp(0.0, 2.0);
            m.set(i, j, d);
            m.set(j, i, d);
        }
    }
    Ok(Rdm {
        matrix: m,
        labels: labels.to_vec(),
    })
}

/// Frobenius distance between each RDM's within-class entries and those of
/// the last RDM in the list.
pub fn rdm_distance_profile(rdms: &[Rdm]) -> Result<Vec<f64>> {
    let last = rdms.last().ok_or_else(|| Error::Invalid("no RDMs given".into()))?;
    let reference = last.within_class();
    rdms.iter()
        .map(|r| {
            if r.labels != last.labels {
                return Err(Error::Invalid("RDMs describe different samples".into()));
            }
            let w = r.within_class();
            Ok(w.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        })
        .collect()
}

/// Layers (1-based) whose distances form the early part of a profile.
pub const PLATEAU_HEAD: usize = 8;

/// Whether a distance profile flattens out: every distance among layers
/// `9..L-1` is below a quarter of the largest among layers `1..8`.
/// Profiles with fewer than ten layers have no plateau region.
pub fn profile_plateau(profile: &[f64]) -> bool {
    let l = profile.len();
    if l < PLATEAU_HEAD + 2 {
        return false;
    }
    let head = profile[..PLATEAU_HEAD].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail = profile[PLATEAU_HEAD..l - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    tail < 0.25 * head
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pearson, Rng};

    #[test]
    fn trivial_entries() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [-1.0, -2.0, -3.0], [5.0, 5.0, 5.0]]).unwrap();
        let r = compute_rdm(&a, &[0, 0, 1, 1]).unwrap();
        assert!(r.matrix.get(0, 1).abs() < 1e-15);
        assert!((r.matrix.get(0, 2) - 2.0).abs() < 1e-15);
        assert_eq!(r.matrix.get(0, 3), 1.0);
        assert_eq!(r.matrix.get(3, 3), 0.0);
    }

    #[test]
    fn matches_pairwise_pearson() {
        let mut rng = Rng::new(3);
        let a = Matrix::gaussian(&mut rng, 12, 7);
        let r = compute_rdm(&a, &[0; 12]).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let expect = if i == j { 0.0 } else { 1.0 - pearson(a.row(i), a.row(j)).unwrap() };
                assert!((r.matrix.get(i, j) - expect).abs() < 1e-12);
                assert_eq!(r.matrix.get(i, j), r.matrix.get(j, i));
            }
        }
    }

    #[test]
    fn random_rows_are_near_one() {
        let mut rng = Rng::new(4);
        let a = Matrix::gaussian(&mut rng, 20, 2000);
        let r = compute_rdm(&a, &[0; 20]).unwrap();
        let off = r.within_class();
        assert!(off.iter().all(|v| (v - 1.0).abs() < 0.1));
        assert!((r.mean_within() - 1.0).abs() < 0.02);
    }

    #[test]
    fn profile_ends_at_zero() {
        let mut rng = Rng::new(5);
        let labels = [0, 0, 1, 1, 1];
        let rdms: Vec<Rdm> = (0..3).map(|_| compute_rdm(&Matrix::gaussian(&mut rng, 5, 4), &labels).unwrap()).collect();
        let p = rdm_distance_profile(&rdms).unwrap();
        assert_eq!(p[2], 0.0);
        assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn plateau_reading() {
        let decaying: Vec<f64> = (0..20).map(|l| (19 - l) as f64).collect();
        assert!(!profile_plateau(&decaying));
        let mut settled = vec![10.0, 8.0, 6.0, 4.0, 3.0, 2.0, 1.5, 1.0];
        settled.extend([0.5; 11]);
        settled.push(0.0);
        assert!(profile_plateau(&settled));
        let mut flat = vec![1.0; 19];
        flat.push(0.0);
        assert!(!profile_plateau(&flat));
        assert!(!profile_plateau(&[3.0, 2.0, 0.0]));
    }

    #[test]
    fn too_few_columns() {
        assert!(compute_rdm(&Matrix::zeros(3, 1), &[0, 1, 2]).is_err());
    }
}
