use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Norm;

/// A per-step scalar schedule. Per-step lists are zero past their end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    PerStep(Vec<f64>),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Constant(0.0)
    }
}

impl Schedule {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::PerStep(v) => v.get(t).copied().unwrap_or(0.0),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = match self {
            Schedule::Constant(v) => !v.is_finite(),
            Schedule::PerStep(v) => v.iter().any(|x| !x.is_finite()),
        };
        if bad {
            return Err(Error::InvalidConfig(format!(
                "{name} schedule must be finite"
            )));
        }
        Ok(())
    }
}

/// Step-size policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepPolicy {
    Constant {
        eta: f64,
    },
    /// `η_t = min(c/(B² L(w_t)), eta_max)`.
    LossAdaptive {
        c: f64,
        eta_max: f64,
    },
}

/// Which examples enter each step's gradient.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BatchSchedule {
    #[default]
    Full,
    /// Subsets used in turn, cycling.
    Cyclic { subsets: Vec<Vec<usize>> },
    /// `size` distinct indices per step from a seeded stream.
    Minibatch { size: usize, seed: u64 },
}

/// Early-termination rule; the budget always applies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StopRule {
    #[default]
    Budget,
    LossBelow {
        tol: f64,
    },
    /// Normalized-margin gap `γ − min_n y_n⟨w,x_n⟩/‖w‖` below `tol`.
    MarginGap {
        gamma: f64,
        tol: f64,
        norm: Norm,
    },
}

/// Deliberate corruption for mutation testing of the verification pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    #[default]
    None,
    NegateDualityMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub step: StepPolicy,
    #[serde(default)]
    pub beta: Schedule,
    #[serde(default)]
    pub gamma: Schedule,
    #[serde(default)]
    pub batch: BatchSchedule,
    pub max_iterations: usize,
    #[serde(default)]
    pub stop: StopRule,
    /// Halve the step while it would leave the domain or raise the loss.
    #[serde(default)]
    pub safeguard: bool,
    /// Snapshot every `cadence` steps; 0 keeps only the endpoints.
    #[serde(default)]
    pub cadence: usize,
    #[serde(default)]
    pub fault: Fault,
}

pub const MAX_ADAPTIVE_C: f64 = std::f64::consts::SQRT_2;

impl OptimizerConfig {
    pub fn constant(eta: f64, max_iterations: usize) -> Self {
        OptimizerConfig {
            step: StepPolicy::Constant { eta },
            beta: Schedule::default(),
            gamma: Schedule::default(),
            batch: BatchSchedule::Full,
            max_iterations,
            stop: StopRule::Budget,
            safeguard: false,
            cadence: 0,
            fault: Fault::None,
        }
    }

    pub fn loss_adaptive(c: f64, eta_max: f64, max_iterations: usize) -> Self {
        OptimizerConfig {
            step: StepPolicy::LossAdaptive { c, eta_max },
            ..Self::constant(1.0, max_iterations)
        }
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_momentum(mut self, beta: Schedule, gamma: Schedule) -> Self {
        self.beta = beta;
        self.gamma = gamma;
        self
    }

    pub fn with_batch(mut self, batch: BatchSchedule) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_cadence(mut self, cadence: usize) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn with_safeguard(mut self, on: bool) -> Self {
        self.safeguard = on;
        self
    }

    pub fn validate(&self, n_examples: usize) -> Result<()> {
        match self.step {
            StepPolicy::Constant { eta } if !(eta > 0.0 && eta.is_finite()) => {
                return Err(Error::InvalidConfig(format!(
                    "step size must be positive and finite, got {eta}"
                )));
            }
            StepPolicy::LossAdaptive { c, eta_max } => {
                if !(c > 0.0 && c <= MAX_ADAPTIVE_C) {
                    return Err(Error::InvalidConfig(format!(
                        "loss-adaptive c must lie in (0, √2], got {c}"
                    )));
                }
                if !(eta_max > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "step cap must be positive, got {eta_max}"
                    )));
                }
            }
            _ => {}
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        self.beta.validate("beta")?;
        self.gamma.validate("gamma")?;
        match &self.batch {
            BatchSchedule::Full => {}
            BatchSchedule::Cyclic { subsets } => {
                if subsets.is_empty() || subsets.iter().flatten().any(|&i| i >= n_examples) {
                    return Err(Error::InvalidConfig(
                        "cyclic subsets must be non-empty and in range".into(),
                    ));
                }
            }
            BatchSchedule::Minibatch { size, .. } => {
                if *size == 0 || *size > n_examples {
                    return Err(Error::InvalidConfig(format!(
                        "minibatch size {size} out of range 1..={n_examples}"
                    )));
                }
            }
        }
        match &self.stop {
            StopRule::LossBelow { tol } if !(*tol >= 0.0) => {
                return Err(Error::InvalidConfig(
                    "loss tolerance must be nonnegative".into(),
                ));
            }
            StopRule::MarginGap { tol, .. } if !(*tol > 0.0) => {
                return Err(Error::InvalidConfig(
                    "margin tolerance must be positive".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// `min(c/(B²·loss), eta_max)`.
pub fn step_size_loss_adaptive(c: f64, b: f64, loss: f64, eta_max: f64) -> Result<f64> {
    if !(loss > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "loss-adaptive step needs a positive loss, got {loss}"
        )));
    }
    if !(c > 0.0 && c <= MAX_ADAPTIVE_C) || !(b > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bad loss-adaptive parameters c={c}, B={b}"
        )));
    }
    Ok((c / (b * b * loss)).min(eta_max))
}

/// The same policy in log space: `log η_t` given `log L(w_t)`.
pub fn log_step_size_loss_adaptive(c: f64, b: f64, log_loss: f64, eta_max: f64) -> f64 {
    (c.ln() - 2.0 * b.ln() - log_loss).min(eta_max.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_adaptive_formula_and_cap() {
        assert_eq!(
            step_size_loss_adaptive(1.0, 1.0, 2.0, f64::INFINITY).unwrap(),
            0.5
        );
        assert_eq!(
            step_size_loss_adaptive(1.0, 1.0, 1e-300, 10.0).unwrap(),
            10.0
        );
        assert!(step_size_loss_adaptive(1.0, 1.0, 0.0, 10.0).is_err());
        assert!(
            (log_step_size_loss_adaptive(1.0, 1.0, 2f64.ln(), 1e300) - 0.5f64.ln()).abs() < 1e-15
        );
    }

    #[test]
    fn validation() {
        assert!(OptimizerConfig::constant(-1.0, 10).validate(1).is_err());
        assert!(OptimizerConfig::constant(0.0, 10).validate(1).is_err());
        assert!(OptimizerConfig::constant(0.1, 0).validate(1).is_err());
        assert!(OptimizerConfig::loss_adaptive(1.5, 1.0, 10)
            .validate(1)
            .is_err());
        assert!(OptimizerConfig::loss_adaptive(1.0, 1.0, 10)
            .validate(1)
            .is_ok());
        let cfg = OptimizerConfig::constant(0.1, 10)
            .with_batch(BatchSchedule::Minibatch { size: 3, seed: 0 });
        assert!(cfg.validate(2).is_err());
    }

    #[test]
    fn schedules() {
        let s = Schedule::PerStep(vec![0.0, 0.5]);
        assert_eq!((s.at(0), s.at(1), s.at(7)), (0.0, 0.5, 0.0));
        assert_eq!(Schedule::Constant(0.3).at(1000), 0.3);
    }

    #[test]
    fn config_round_trip() {
        let cfg = OptimizerConfig::loss_adaptive(1.0, 1e300, 100)
            .with_stop(StopRule::MarginGap {
                gamma: 0.5,
                tol: 1e-3,
                norm: Norm::l1(),
            })
            .with_momentum(Schedule::PerStep(vec![0.0, 0.1]), Schedule::Constant(0.0));
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<OptimizerConfig>(&text).unwrap(), cfg);
    }
}
