//! Small dense linear-algebra helpers shared by the optimizers and oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Orthogonal projector onto the span of a set of vectors.
#[derive(Clone, Debug)]
pub struct SpanProjector {
    basis: DMatrix<f64>,
}

impl SpanProjector {
    /// Builds the projector from the rows of `rows` (one vector per row).
    pub fn from_rows(rows: &DMatrix<f64>) -> Self {
        let dim = rows.ncols();
        if rows.nrows() == 0 || dim == 0 {
            return SpanProjector {
                basis: DMatrix::zeros(dim, 0),
            };
        }
        let svd = rows.transpose().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.max();
        let tol = smax * 1e-12 * (rows.nrows().max(dim) as f64);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > tol)
            .collect();
        let mut basis = DMatrix::zeros(dim, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            basis.set_column(j, &u.column(i));
        }
        SpanProjector { basis }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// Component of `v` orthogonal to the span.
    pub fn orthogonal(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.project(v)
    }

    pub fn residual_norm(&self, v: &DVector<f64>) -> f64 {
        self.orthogonal(v).norm()
    }
}

/// Solves `a x = b` for symmetric positive (semi)definite `a`, adding a
/// ridge `mu` to the diagonal when Cholesky fails.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let scale = a.diagonal().amax().max(1e-300);
    let mut mu = scale * 1e-14;
    for _ in 0..40 {
        let mut reg = a.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += mu;
        }
        if let Some(ch) = reg.cholesky() {
            return Ok(ch.solve(b));
        }
        mu *= 10.0;
    }
    Err(Error::NonConvergence {
        solver: "cholesky".into(),
        residual: f64::INFINITY,
    })
}

/// Numerically stable `log(sum(exp(v)))`; `-inf` for an empty slice.
pub fn log_sum_exp(v: impl IntoIterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = v.into_iter().collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + vals.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        format!("{}", x)
    }
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projector_removes_span_component() {
        let rows = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 0.0]);
        let p = SpanProjector::from_rows(&rows);
        assert_eq!(p.rank(), 1);
        let v = DVector::from_vec(vec![2.0, -1.0, 5.0]);
        assert!(
            p.orthogonal(&v)
                .dot(&DVector::from_vec(vec![1.0, 2.0, 0.0]))
                .abs()
                < 1e-14
        );
        assert!((p.residual_norm(&v) - v.norm()).abs() < 1e-14);
    }

    #[test]
    fn empty_span_is_identity_residual() {
        let rows = DMatrix::<f64>::zeros(0, 2);
        let p = SpanProjector::from_rows(&rows);
        let v = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(p.residual_norm(&v), 5.0);
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let v = [0.1, -2.0, 1.5];
        let direct: f64 = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(v) - direct).abs() < 1e-14);
        assert!(log_sum_exp([1000.0, 1000.0]).is_finite());
    }

    #[test]
    fn fmt17_round_trips() {
        let x = 0.1f64 + 0.2;
        assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }
}
