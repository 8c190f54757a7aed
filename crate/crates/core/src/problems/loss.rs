use serde::{Deserialize, Serialize};

use crate::linalg::softplus;

/// Pointwise loss `ℓ(u, y)` of a prediction `u` against a label `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Exponential,
    Logistic,
}

/// Which implicit-bias regime a loss belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    /// Minimised exactly at `u = y`; iterates converge to a point.
    UniqueFiniteRoot,
    /// Strictly decreasing in `u·y` with unattained infimum; iterates diverge in norm.
    StrictMonotone,
}

impl Loss {
    pub fn family(self) -> LossFamily {
        match self {
            Loss::Squared => LossFamily::UniqueFiniteRoot,
            Loss::Exponential | Loss::Logistic => LossFamily::StrictMonotone,
        }
    }

    pub fn value(self, u: f64, y: f64) -> f64 {
        match self {
            Loss::Squared => (u - y) * (u - y),
            Loss::Exponential => (-u * y).exp(),
            Loss::Logistic => softplus(-u * y),
        }
    }

    pub fn derivative(self, u: f64, y: f64) -> f64 {
        match self {
            Loss::Squared => 2.0 * (u - y),
            Loss::Exponential => -y * (-u * y).exp(),
            Loss::Logistic => -y / (1.0 + (u * y).exp()),
        }
    }

    /// `log ℓ(u, y)`, finite wherever the loss is positive. Only meaningful for
    /// strict-monotone losses.
    pub fn log_value(self, u: f64, y: f64) -> f64 {
        let m = u * y;
        match self {
            Loss::Squared => self.value(u, y).ln(),
            Loss::Exponential => -m,
            Loss::Logistic => {
                if m > 30.0 {
                    -m + (-0.5 * (-m).exp()).ln_1p()
                } else {
                    softplus(-m).ln()
                }
            }
        }
    }

    /// `log |ℓ′(u, y)|` and the sign of `ℓ′`.
    pub fn log_abs_derivative(self, u: f64, y: f64) -> (f64, f64) {
        let m = u * y;
        match self {
            Loss::Squared => {
                let d = self.derivative(u, y);
                (d.abs().ln(), d.signum())
            }
            Loss::Exponential => (y.abs().ln() - m, -y.signum()),
            Loss::Logistic => (y.abs().ln() - softplus(m), -y.signum()),
        }
    }
}

pub fn loss_value(kind: Loss, u: f64, y: f64) -> f64 {
    kind.value(u, y)
}

pub fn loss_derivative(kind: Loss, u: f64, y: f64) -> f64 {
    kind.derivative(u, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_values() {
        assert_eq!(loss_value(Loss::Squared, 2.0, 1.0), 1.0);
        assert_eq!(loss_value(Loss::Exponential, 0.0, 1.0), 1.0);
        assert!((loss_value(Loss::Logistic, 0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(loss_derivative(Loss::Squared, 3.0, 1.0), 4.0);
        assert_eq!(loss_derivative(Loss::Exponential, 0.0, 1.0), -1.0);
    }

    #[test]
    fn families() {
        assert_eq!(Loss::Squared.family(), LossFamily::UniqueFiniteRoot);
        assert_eq!(Loss::Exponential.family(), LossFamily::StrictMonotone);
        assert_eq!(Loss::Logistic.family(), LossFamily::StrictMonotone);
    }

    #[test]
    fn log_forms_agree_with_direct_forms() {
        for &kind in &[Loss::Exponential, Loss::Logistic] {
            for &(u, y) in &[(0.3, 1.0), (-2.0, 1.0), (1.5, -1.0), (12.0, 1.0)] {
                assert!((kind.log_value(u, y) - kind.value(u, y).ln()).abs() < 1e-12);
                let (la, s) = kind.log_abs_derivative(u, y);
                assert!((s * la.exp() - kind.derivative(u, y)).abs() < 1e-14);
            }
        }
        assert!((Loss::Logistic.log_value(200.0, 1.0) + 200.0).abs() < 1e-12);
    }
}
