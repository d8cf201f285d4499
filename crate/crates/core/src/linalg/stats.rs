use crate::{Error, Result};

/// Pearson correlation of two equally long samples.
///
/// Errors when either sample has zero variance; callers that need a value
/// there (RDMs) decide on their own convention.
pub fn pearson(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() < 2 {
        return Err(Error::Shape {
            op: "pearson",
            left: (1, u.len()),
            right: (1, v.len()),
        });
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu == 0.0 {
        return Err(Error::UndefinedCorrelation("first argument"));
    }
    if svv == 0.0 {
        return Err(Error::UndefinedCorrelation("second argument"));
    }
    Ok((suv / (suu.sqrt() * svv.sqrt())).clamp(-1.0, 1.0))
}

/// Fractional ranks (1-based, ties share their average rank).
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson over fractional ranks).
pub fn spearman(u: &[f64], v: &[f64]) -> Result<f64> {
    pearson(&ranks(u), &ranks(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_textbook_formula() {
        // r = (n Σxy - Σx Σy) / sqrt((n Σx² - (Σx)²)(n Σy² - (Σy)²))
        let (x, y) = ([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 5.0]);
        let n = 4.0;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
        assert!((pearson(&x, &y).unwrap() - r).abs() < 1e-14);
        assert!((r - 0.982_707_629_823_990_8).abs() < 1e-12);
    }

    #[test]
    fn constant_input_is_an_error() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use crate::linalg::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn symmetric_and_affine_invariant(seed in any::<u64>(), n in 3usize..30, a in 0.1f64..10.0, b in -5.0f64..5.0) {
                let mut rng = Rng::new(seed);
                let u: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
                let v: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
                let r = pearson(&u, &v).unwrap();
                prop_assert!((r - pearson(&v, &u).unwrap()).abs() < 1e-12);
                let moved: Vec<f64> = u.iter().map(|x| a * x + b).collect();
                prop_assert!((r - pearson(&moved, &v).unwrap()).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
