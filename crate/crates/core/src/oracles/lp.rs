//! Dense tableau simplex for `max cᵀx s.t. Ax ≤ b, x ≥ 0` with `b ≥ 0`, so
//! the slack basis is feasible and no phase one is needed. Bland's rule
//! prevents cycling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    /// Dual prices of the `Ax ≤ b` rows.
    pub duals: DVector<f64>,
    pub objective: f64,
}

pub fn solve_standard_lp(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<LpSolution> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return Err(Error::InvalidConfig("LP shape mismatch".into()));
    }
    if b.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidConfig(
            "LP right-hand side must be nonnegative".into(),
        ));
    }
    // Tableau rows 0..m are constraints; row m is the reduced-cost row.
    let cols = n + m + 1;
    let mut t = DMatrix::zeros(m + 1, cols);
    for i in 0..m {
        for j in 0..n {
            t[(i, j)] = a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, cols - 1)] = b[i];
    }
    for j in 0..n {
        t[(m, j)] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    for _ in 0..50_000 {
        let Some(enter) = (0..n + m).find(|&j| t[(m, j)] < -PIVOT_EPS) else {
            let mut x = DVector::zeros(n);
            for (i, &bj) in basis.iter().enumerate() {
                if bj < n {
                    x[bj] = t[(i, cols - 1)];
                }
            }
            let duals = DVector::from_iterator(m, (0..m).map(|i| t[(m, n + i)]));
            return Ok(LpSolution {
                objective: t[(m, cols - 1)],
                x,
                duals,
            });
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let aij = t[(i, enter)];
            if aij > PIVOT_EPS {
                let ratio = t[(i, cols - 1)] / aij;
                let better = ratio < best - 1e-15
                    || (ratio <= best + 1e-15 && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(r) = leave else {
            return Err(Error::NonConvergence {
                solver: "simplex (unbounded)".into(),
                residual: f64::INFINITY,
            });
        };
        let piv = t[(r, enter)];
        for j in 0..cols {
            t[(r, j)] /= piv;
        }
        for i in 0..=m {
            if i != r {
                let f = t[(i, enter)];
                if f != 0.0 {
                    for j in 0..cols {
                        t[(i, j)] -= f * t[(r, j)];
                    }
                }
            }
        }
        basis[r] = enter;
    }
    Err(Error::NonConvergence {
        solver: "simplex iteration limit".into(),
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), value 36
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 3.0, 2.0]);
        let b = DVector::from_vec(vec![4.0, 12.0, 18.0]);
        let c = DVector::from_vec(vec![3.0, 5.0]);
        let s = solve_standard_lp(&a, &b, &c).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        // strong duality: bᵀy = cᵀx
        assert!((b.dot(&s.duals) - 36.0).abs() < 1e-12);
        assert!(s.duals.iter().all(|&y| y >= -1e-12));
    }

    #[test]
    fn unbounded_is_reported() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let s = solve_standard_lp(
            &a,
            &DVector::from_vec(vec![1.0]),
            &DVector::from_vec(vec![0.0, 1.0]),
        );
        assert!(s.is_err());
    }
}
