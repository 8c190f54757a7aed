//! Lawson–Hanson active-set nonnegative least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problems::Dataset;

/// `argmin_{x ≥ 0} ‖A x − b‖₂`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.amax().max(1.0) * b.amax().max(1.0) * (m.max(n) as f64);

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut z = DVector::zeros(n);
        if idx.is_empty() {
            return z;
        }
        let sub = a.select_columns(&idx);
        let sol = sub
            .clone()
            .svd(true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };

    for _ in 0..(3 * n + 10) {
        let w = a.tr_mul(&(b - a * &x));
        let cand = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else {
            return Ok(x);
        };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            if (0..n).filter(|&k| passive[k]).all(|k| z[k] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in (0..n).filter(|&k| passive[k] && z[k] <= 0.0) {
                let denom = x[k] - z[k];
                if denom > 0.0 {
                    alpha = alpha.min(x[k] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x += (z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= 1e-15 {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    Err(Error::NonConvergence {
        solver: "nnls".into(),
        residual: (a * &x - b).norm(),
    })
}

/// `min_{α ≥ 0} ‖z − Σ_{n∈S} α_n y_n x_n‖₂`.
pub fn nonneg_span_residual(ds: &Dataset, support: &[usize], z: &DVector<f64>) -> Result<f64> {
    ds.check_dim(z)?;
    if support.is_empty() {
        return Ok(z.norm());
    }
    let cone = ds.subset(support)?.signed_features().transpose();
    let alpha = nnls(&cone, z)?;
    Ok((z - cone * alpha).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Task;

    #[test]
    fn nnls_matches_unconstrained_when_interior() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = nnls(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_clamps_negative_directions() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        assert_eq!(nnls(&a, &b).unwrap(), DVector::from_vec(vec![0.0, 2.0]));
    }

    #[test]
    fn span_residual_examples() {
        let ds = Dataset::from_rows(
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            &[1.0, -1.0],
            Task::Classification,
        )
        .unwrap();
        let z = DVector::from_vec(vec![0.0, -1.0, 0.0]);
        assert!(nonneg_span_residual(&ds, &[0, 1], &z).unwrap() < 1e-14);
        let z = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!((nonneg_span_residual(&ds, &[0, 1], &z).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(nonneg_span_residual(&ds, &[], &z).unwrap(), 1.0);
        let z = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!((nonneg_span_residual(&ds, &[1], &z).unwrap() - 1.0).abs() < 1e-14);
    }
}
