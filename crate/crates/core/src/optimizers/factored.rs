//! Gradient descent on the factorization `W = UUᵀ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::steps::Eta;
use crate::error::{Error, Result};
use crate::problems::{Loss, MatrixDataset};

/// Step policy for factorized runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FactorStep {
    Constant {
        eta: f64,
    },
    /// `η_t = c / (B² · L(W_t) · ‖U_t‖_F²)` with `B = max_n ‖X_n‖_op`.
    LossAdaptive {
        c: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorSnapshot {
    pub t: usize,
    pub u: DMatrix<f64>,
    pub log_loss: f64,
}

#[derive(Clone, Debug)]
pub struct FactorRun {
    pub snapshots: Vec<FactorSnapshot>,
    pub final_u: DMatrix<f64>,
    pub iterations: usize,
    pub final_log_loss: f64,
}

/// `U ← U − η (∇L(W) + ∇L(W)ᵀ) U` with `W = UUᵀ`. Returns the gradient of
/// `L` at `W` as `(log_scale, direction)`.
pub fn factored_gd_step(
    u: &mut DMatrix<f64>,
    ds: &MatrixDataset,
    loss: Loss,
    eta: Eta,
) -> Result<(f64, DMatrix<f64>)> {
    let w = &*u * u.transpose();
    let (ls, g) = ds.scaled_gradient(loss, &w)?;
    let step = (&g + g.transpose()) * &*u * eta.times_exp(ls);
    if step.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            iteration: 0,
            what: "factored gradient".into(),
        });
    }
    *u -= step;
    Ok((ls, g))
}

fn op_norm(x: &DMatrix<f64>) -> f64 {
    x.clone().svd(false, false).singular_values.max()
}

/// Runs factorized gradient descent from `u0`. Stops early when the loss
/// drops below `loss_tol`.
pub fn run_factored(
    ds: &MatrixDataset,
    loss: Loss,
    u0: DMatrix<f64>,
    step: FactorStep,
    max_iterations: usize,
    cadence: usize,
    loss_tol: Option<f64>,
) -> Result<FactorRun> {
    if u0.nrows() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: u0.nrows(),
        });
    }
    match step {
        FactorStep::Constant { eta } if !(eta > 0.0 && eta.is_finite()) => {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive and finite, got {eta}"
            )));
        }
        FactorStep::LossAdaptive { c } if !(c > 0.0 && c <= super::MAX_ADAPTIVE_C) => {
            return Err(Error::InvalidConfig(format!(
                "loss-adaptive c must lie in (0, √2], got {c}"
            )));
        }
        _ => {}
    }
    let bound = ds.features().iter().map(op_norm).fold(0.0, f64::max);
    let mut u = u0;
    let log_loss_of = |u: &DMatrix<f64>| ds.log_objective(loss, &(u * u.transpose()));
    let mut log_loss = log_loss_of(&u)?;
    let mut snapshots = vec![FactorSnapshot {
        t: 0,
        u: u.clone(),
        log_loss,
    }];
    let mut t = 0;
    while t < max_iterations {
        if loss_tol.is_some_and(|tol| log_loss <= tol.ln()) {
            break;
        }
        let eta = match step {
            FactorStep::Constant { eta } => Eta::Linear(eta),
            FactorStep::LossAdaptive { c } => {
                Eta::Log(c.ln() - 2.0 * bound.ln() - log_loss - u.norm_squared().ln())
            }
        };
        factored_gd_step(&mut u, ds, loss, eta).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { iteration: t, what },
            other => other,
        })?;
        t += 1;
        log_loss = log_loss_of(&u)?;
        if cadence > 0 && t % cadence == 0 {
            snapshots.push(FactorSnapshot {
                t,
                u: u.clone(),
                log_loss,
            });
        }
    }
    if snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(FactorSnapshot {
            t,
            u: u.clone(),
            log_loss,
        });
    }
    Ok(FactorRun {
        snapshots,
        final_u: u,
        iterations: t,
        final_log_loss: log_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn identity_example_first_step() {
        let ds = MatrixDataset::new(vec![DMatrix::identity(2, 2)], DVector::from_vec(vec![1.0]))
            .unwrap();
        let eta = 0.3;
        let mut u = DMatrix::identity(2, 2);
        factored_gd_step(&mut u, &ds, Loss::Exponential, Eta::Linear(eta)).unwrap();
        let expected = DMatrix::identity(2, 2) * (1.0 + 2.0 * eta * (-2.0f64).exp());
        assert!((u - expected).amax() < 1e-15);
    }

    #[test]
    fn zero_step_leaves_factor_unchanged() {
        let ds = MatrixDataset::new(vec![DMatrix::identity(2, 2)], DVector::from_vec(vec![1.0]))
            .unwrap();
        let mut u = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.3, 0.7]);
        let u0 = u.clone();
        factored_gd_step(&mut u, &ds, Loss::Exponential, Eta::Linear(0.0)).unwrap();
        assert_eq!(u, u0);
    }
}
