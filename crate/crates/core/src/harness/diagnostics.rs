//! Convergence diagnostics computed from trajectories and step records.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Norm;
use crate::linalg::SpanProjector;
use crate::optimizers::StepInfo;
use crate::oracles::MarginCertificate;
use crate::problems::{Dataset, MatrixDataset};

/// Snapshots in the window used to judge convergence in direction.
pub const CAUCHY_WINDOW: usize = 100;

fn nonzero(v: &DVector<f64>, norm: &Norm, what: &str) -> Result<f64> {
    let n = norm.value(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Degenerate(format!(
            "{what} has no direction (norm {n})"
        )));
    }
    Ok(n)
}

/// `‖w/‖w‖ − w_ref/‖w_ref‖‖` in `norm`.
pub fn direction_distance(w: &DVector<f64>, w_ref: &DVector<f64>, norm: &Norm) -> Result<f64> {
    if w.len() != w_ref.len() {
        return Err(Error::DimensionMismatch {
            expected: w_ref.len(),
            found: w.len(),
        });
    }
    let a = nonzero(w, norm, "iterate")?;
    let b = nonzero(w_ref, norm, "reference")?;
    Ok(norm.value(&(w / a - w_ref / b)))
}

/// `γ − min_n y_n⟨w, x_n⟩/‖w‖` in the certificate's norm.
pub fn margin_gap(ds: &Dataset, w: &DVector<f64>, cert: &MarginCertificate) -> Result<f64> {
    let n = nonzero(w, &cert.norm, "iterate")?;
    Ok(cert.gamma - ds.margins(w)?.min() / n)
}

/// Largest pairwise direction distance among the last `window` points.
pub fn cauchy_gap(points: &[DVector<f64>], norm: &Norm, window: usize) -> Result<f64> {
    let tail = &points[points.len().saturating_sub(window)..];
    let dirs = tail
        .iter()
        .map(|w| nonzero(w, norm, "snapshot").map(|n| w / n))
        .collect::<Result<Vec<_>>>()?;
    let mut gap = 0.0f64;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            gap = gap.max(norm.value(&(&dirs[i] - &dirs[j])));
        }
    }
    Ok(gap)
}

/// Distance of `z − z0` from the span of the features.
pub fn manifold_residual(span: &SpanProjector, z: &DVector<f64>, z0: &DVector<f64>) -> f64 {
    span.residual_norm(&(z - z0))
}

/// Tracks the unnormalized-margin lower bound of steepest descent on the
/// exponential loss,
/// `min_n y_n⟨w_{t+1}, x_n⟩ ≥ Σ_{u≤t} η_uγ_u²/L(w_u) − Σ_{u≤t} η_u²B²γ_u²/2 − log L(w_0)`
/// with `γ_u = ‖∇L(w_u)‖⋆`.
#[derive(Clone, Debug)]
pub struct MarginBoundTracker {
    dual: Norm,
    log_bound: f64,
    gain: f64,
    penalty: f64,
    log_l0: f64,
    /// Smallest `margin − bound`, scaled by `1 + |bound|`.
    pub worst_slack: f64,
}

impl MarginBoundTracker {
    pub fn new(norm: &Norm, ds: &Dataset, log_l0: f64) -> Self {
        MarginBoundTracker {
            dual: norm.dual(),
            log_bound: norm.feature_bound(ds).ln(),
            gain: 0.0,
            penalty: 0.0,
            log_l0,
            worst_slack: f64::INFINITY,
        }
    }

    pub fn observe(&mut self, info: &StepInfo, ds: &Dataset) {
        let log_eta = info.eta.log();
        let log_gamma = info.grad.log_scale + self.dual.value(&info.grad.direction).ln();
        self.gain += (log_eta + 2.0 * log_gamma - info.log_loss_before).exp();
        self.penalty += 0.5 * (2.0 * log_eta + 2.0 * self.log_bound + 2.0 * log_gamma).exp();
        let bound = self.gain - self.penalty - self.log_l0;
        let margin = ds
            .margins(&info.after.w)
            .map(|m| m.min())
            .unwrap_or(f64::NAN);
        self.worst_slack = self.worst_slack.min((margin - bound) / (1.0 + bound.abs()));
    }

    pub fn holds(&self) -> bool {
        self.worst_slack >= -1e-9
    }
}

/// Partial sums of `η_t‖∇L(w_t)‖⋆²`, bounded by `2(L(w_0) − L(w_{t+1}))` for
/// descent steps.
#[derive(Clone, Debug)]
pub struct SquareSumTracker {
    dual: Norm,
    l0: f64,
    partial: Vec<f64>,
    /// Largest `S_t / (2(L_0 − L_{t+1}))`.
    pub worst_ratio: f64,
}

impl SquareSumTracker {
    pub fn new(norm: &Norm, log_l0: f64) -> Self {
        SquareSumTracker {
            dual: norm.dual(),
            l0: log_l0.exp(),
            partial: Vec::new(),
            worst_ratio: 0.0,
        }
    }

    pub fn observe(&mut self, info: &StepInfo) {
        let log_gamma = info.grad.log_scale + self.dual.value(&info.grad.direction).ln();
        let term = (info.eta.log() + 2.0 * log_gamma).exp();
        let s = self.partial.last().copied().unwrap_or(0.0) + term;
        self.partial.push(s);
        let budget = 2.0 * (self.l0 - info.log_loss_after.exp());
        if budget > 0.0 {
            self.worst_ratio = self.worst_ratio.max(s / budget);
        } else if s > 0.0 {
            self.worst_ratio = f64::INFINITY;
        }
    }

    pub fn total(&self) -> f64 {
        self.partial.last().copied().unwrap_or(0.0)
    }

    /// Share of the total contributed by the last 10% of steps.
    pub fn tail_fraction(&self) -> f64 {
        let n = self.partial.len();
        if n == 0 || self.total() == 0.0 {
            return 0.0;
        }
        let head = self.partial[n - 1 - n / 10];
        (self.total() - head) / self.total()
    }
}

/// Whether each step kept `log L` from increasing.
#[derive(Clone, Debug, Default)]
pub struct MonotoneTracker {
    pub violations: usize,
    pub worst_increase: f64,
}

impl MonotoneTracker {
    pub fn observe(&mut self, info: &StepInfo) {
        let inc = info.log_loss_after - info.log_loss_before;
        if !(inc <= 1e-12 * info.log_loss_before.abs().max(1.0)) {
            self.violations += 1;
            self.worst_increase =
                self.worst_increase
                    .max(if inc.is_nan() { f64::INFINITY } else { inc });
        }
    }
}

/// Complementary-slackness violation of a factored iterate: with weights
/// `α_n ∝ exp(−y_n⟨W, X_n⟩)` and normalized margins `m̄_n` of `W/tr W`,
/// `max_n α_n (m̄_n/min_k m̄_k − 1)`.
pub fn factored_complementary_slackness(u: &DMatrix<f64>, ds: &MatrixDataset) -> Result<f64> {
    let w = u * u.transpose();
    let tr = w.trace();
    if !(tr > 0.0) {
        return Err(Error::Degenerate("zero factor".into()));
    }
    let m = ds.margins(&w)?;
    let mbar = &m / tr;
    let mmin = mbar.min();
    if !(mmin > 0.0) {
        return Err(Error::Degenerate(
            "factor does not separate the data".into(),
        ));
    }
    let top = m.iter().map(|x| -x).fold(f64::NEG_INFINITY, f64::max);
    let weights = m.map(|x| (-x - top).exp());
    let total = weights.sum();
    Ok((0..m.len())
        .map(|n| weights[n] / total * (mbar[n] / mmin - 1.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::max_margin;
    use crate::problems::Task;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn direction_distance_examples() {
        let w = v(&[0.6, -0.8]);
        assert!(direction_distance(&(&w * 5.0), &w, &Norm::l2()).unwrap() < 1e-15);
        assert!((direction_distance(&w, &(-&w), &Norm::l2()).unwrap() - 2.0).abs() < 1e-15);
        assert!(direction_distance(&v(&[0.0, 0.0]), &w, &Norm::l2()).is_err());
    }

    #[test]
    fn margin_gap_examples() {
        let ds = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[1.0, 1.0],
            Task::Classification,
        )
        .unwrap();
        let cert = max_margin(&Norm::l2(), &ds).unwrap();
        assert!(margin_gap(&ds, &cert.w_star, &cert).unwrap().abs() < 1e-8);
        let gap = margin_gap(&ds, &v(&[1.0, -0.5]), &cert).unwrap();
        assert!(gap > cert.gamma);
        assert!(margin_gap(&ds, &v(&[0.0, 0.0]), &cert).is_err());
    }

    #[test]
    fn cauchy_gap_of_rescaled_points_is_zero() {
        let pts: Vec<_> = (1..20).map(|k| v(&[k as f64, 2.0 * k as f64])).collect();
        assert!(cauchy_gap(&pts, &Norm::l2(), CAUCHY_WINDOW).unwrap() < 1e-15);
        let pts = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        assert!((cauchy_gap(&pts, &Norm::l2(), 2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn complementary_slackness_vanishes_with_equal_margins() {
        let ds = MatrixDataset::new(
            vec![
                DMatrix::from_diagonal(&v(&[1.0, 0.0])),
                DMatrix::from_diagonal(&v(&[0.0, 1.0])),
            ],
            v(&[1.0, 1.0]),
        )
        .unwrap();
        let u = DMatrix::identity(2, 2) * 3.0;
        assert!(factored_complementary_slackness(&u, &ds).unwrap() < 1e-15);
    }
}
