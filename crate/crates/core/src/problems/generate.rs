//! Seeded random problem generators. Features are standard Gaussian.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::{Dataset, MatrixDataset, Task};
use crate::error::{Error, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(rng: &mut impl Rng, d: usize) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Underdetermined regression `y = X w_true` with `N < d` and a strictly
/// positive `w_true`, so every potential (entropy included) has a feasible
/// point in its domain.
pub fn realizable_regression(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n >= d {
        return Err(Error::InvalidConfig(format!(
            "need N < d, got N={n}, d={d}"
        )));
    }
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, d);
    let w_true = gaussian_vector(&mut r, d).map(|v| (0.5 * v).exp());
    let y = &x * &w_true;
    Dataset::new(x, y, Task::Regression)
}

/// Regression whose solution set meets the interior of the probability
/// simplex. Returns the dataset and a strictly positive feasible point on it.
pub fn simplex_regression(n: usize, d: usize, seed: u64) -> Result<(Dataset, DVector<f64>)> {
    if n + 1 >= d {
        return Err(Error::InvalidConfig(format!(
            "need N + 1 < d, got N={n}, d={d}"
        )));
    }
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, d);
    let w = gaussian_vector(&mut r, d).map(|v| (0.5 * v).exp());
    let w = &w / w.sum();
    let y = &x * &w;
    Ok((Dataset::new(x, y, Task::Regression)?, w))
}

/// Linearly separable classification data. A hidden direction labels each
/// Gaussian point; points whose normalized ℓ₂ margin under it is below
/// `min_margin` are redrawn.
pub fn separable_classification(n: usize, d: usize, min_margin: f64, seed: u64) -> Result<Dataset> {
    let mut r = rng(seed);
    let w_true = gaussian_vector(&mut r, d);
    let w_true = &w_true / w_true.norm();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while rows.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(Error::InvalidConfig("margin requirement too strict".into()));
        }
        let x = gaussian_vector(&mut r, d);
        let s = w_true.dot(&x);
        if s.abs() < min_margin * x.norm() {
            continue;
        }
        labels.push(s.signum());
        rows.push(x.iter().cloned().collect::<Vec<_>>());
    }
    Dataset::from_rows(&rows, &labels, Task::Classification)
}

/// Symmetric Gaussian matrices labelled by `sign⟨W_true, X_n⟩` for a random
/// PSD `W_true`; points with `|⟨W_true, X_n⟩| < min_margin·‖W_true‖_F‖X_n‖_F`
/// are redrawn.
pub fn psd_separable(n: usize, d: usize, min_margin: f64, seed: u64) -> Result<MatrixDataset> {
    let mut r = rng(seed);
    let b = gaussian_matrix(&mut r, d, d);
    let w_true = &b * b.transpose();
    let mut feats = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while feats.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(Error::InvalidConfig("margin requirement too strict".into()));
        }
        let g = gaussian_matrix(&mut r, d, d);
        let x = (&g + g.transpose()) * 0.5;
        let s = w_true.dot(&x);
        if s.abs() < min_margin * w_true.norm() * x.norm() {
            continue;
        }
        labels.push(s.signum());
        feats.push(x);
    }
    MatrixDataset::new(feats, DVector::from_vec(labels))
}

/// Symmetric Gaussian matrices with real targets `⟨W_true, X_n⟩` for a random
/// PSD `W_true`, so the squared loss has PSD global minimizers.
pub fn psd_regression(n: usize, d: usize, seed: u64) -> Result<MatrixDataset> {
    let mut r = rng(seed);
    let b = gaussian_matrix(&mut r, d, d);
    let w_true = &b * b.transpose();
    let feats: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let g = gaussian_matrix(&mut r, d, d);
            (&g + g.transpose()) * 0.5
        })
        .collect();
    let labels = DVector::from_iterator(n, feats.iter().map(|x| w_true.dot(x)));
    MatrixDataset::new(feats, labels)
}

/// A point drawn uniformly from the probability simplex.
pub fn simplex_point(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    let e = DVector::from_iterator(n, (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()));
    let s = e.sum();
    e / s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realizable_is_consistent() {
        let ds = realizable_regression(3, 10, 1).unwrap();
        assert_eq!((ds.n_examples(), ds.dim()), (3, 10));
        assert!(realizable_regression(4, 4, 1).is_err());
    }

    #[test]
    fn separable_labels_follow_hidden_direction() {
        let ds = separable_classification(12, 3, 0.1, 5).unwrap();
        assert_eq!(ds.n_examples(), 12);
        assert!(ds.labels().iter().all(|&y| y == 1.0 || y == -1.0));
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(
            separable_classification(8, 2, 0.1, 3).unwrap(),
            separable_classification(8, 2, 0.1, 3).unwrap()
        );
        assert_eq!(
            psd_separable(3, 2, 0.1, 9).unwrap(),
            psd_separable(3, 2, 0.1, 9).unwrap()
        );
    }

    #[test]
    fn simplex_regression_point_is_feasible() {
        let (ds, w) = simplex_regression(2, 5, 4).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-14 && w.min() > 0.0);
        assert!(ds.max_violation(&w).unwrap() < 1e-12);
    }
}
