//! Iterative update rules, step-size policies, run drivers and
//! continuous-time flows.

mod config;
mod factored;
mod flow;
mod run;
mod steps;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use config::{
    log_step_size_loss_adaptive, step_size_loss_adaptive, BatchSchedule, Fault, OptimizerConfig,
    Schedule, StepPolicy, StopRule, MAX_ADAPTIVE_C,
};
pub use factored::{factored_gd_step, run_factored, FactorRun, FactorSnapshot, FactorStep};
pub use flow::{flow_limit, integrate_flow, FlowKind, FlowOptions, FlowPoint};
pub use run::{run, Aborted, Snapshot, StepInfo, StopReason, Trajectory};
pub use steps::{
    adagrad_step, coordinate_step, gd_step, md_constrained_step, md_dual_momentum_step,
    md_primal_momentum_step, md_step, momentum_step, ngd_step, sd_step, AdagradOptions,
    AffineConstraint, Eta, StepParams,
};

use crate::geometry::{Norm, Potential, TieRule};
use crate::problems::{Dataset, Loss};

/// A dataset paired with a loss.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub dataset: &'a Dataset,
    pub loss: Loss,
}

impl<'a> Problem<'a> {
    pub fn new(dataset: &'a Dataset, loss: Loss) -> Self {
        Problem { dataset, loss }
    }
}

/// Iterate plus whatever buffers the algorithm keeps.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub t: usize,
    pub w: DVector<f64>,
    /// Dual iterate `∇ψ(w)` for mirror-type methods.
    pub z: Option<DVector<f64>>,
    pub dw_prev: DVector<f64>,
    pub dz_prev: DVector<f64>,
    /// AdaGrad diagonal.
    pub accumulator: Option<DVector<f64>>,
}

impl OptimizerState {
    pub fn new(w0: DVector<f64>) -> Self {
        let d = w0.len();
        OptimizerState {
            t: 0,
            w: w0,
            z: None,
            dw_prev: DVector::zeros(d),
            dz_prev: DVector::zeros(d),
            accumulator: None,
        }
    }

    /// State for a mirror-type method, with the dual iterate initialized.
    pub fn mirror(w0: DVector<f64>, potential: &Potential) -> crate::Result<Self> {
        let z = potential.grad(&w0)?;
        let mut s = OptimizerState::new(w0);
        s.z = Some(z);
        Ok(s)
    }
}

/// The update rule of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Algorithm {
    Gd,
    /// Heavy-ball / Nesterov momentum, per the β and γ schedules.
    Momentum,
    Mirror {
        potential: Potential,
    },
    MirrorConstrained {
        potential: Potential,
        constraint: AffineConstraint,
    },
    MirrorDualMomentum {
        potential: Potential,
    },
    MirrorPrimalMomentum {
        potential: Potential,
    },
    NaturalGradient {
        potential: Potential,
    },
    Steepest {
        norm: Norm,
        #[serde(default)]
        tie: TieRule,
    },
    Coordinate {
        #[serde(default)]
        tie: TieRule,
    },
    Adagrad {
        #[serde(default)]
        options: AdagradOptions,
    },
}

impl Algorithm {
    pub fn potential(&self) -> Option<&Potential> {
        match self {
            Algorithm::Mirror { potential }
            | Algorithm::MirrorConstrained { potential, .. }
            | Algorithm::MirrorDualMomentum { potential }
            | Algorithm::MirrorPrimalMomentum { potential }
            | Algorithm::NaturalGradient { potential } => Some(potential),
            _ => None,
        }
    }

    /// Norm whose dual bounds the features for loss-adaptive steps.
    pub fn step_norm(&self) -> Norm {
        match self {
            Algorithm::Steepest { norm, .. } => norm.clone(),
            Algorithm::Coordinate { .. } => Norm::l1(),
            _ => Norm::l2(),
        }
    }

    /// Whether the state carries a dual iterate.
    pub fn is_mirror(&self) -> bool {
        matches!(
            self,
            Algorithm::Mirror { .. }
                | Algorithm::MirrorConstrained { .. }
                | Algorithm::MirrorDualMomentum { .. }
                | Algorithm::MirrorPrimalMomentum { .. }
        )
    }

    pub fn initial_state(&self, w0: DVector<f64>) -> crate::Result<OptimizerState> {
        match self.potential() {
            Some(p) if self.is_mirror() => OptimizerState::mirror(w0, p),
            Some(p) => {
                p.check_domain(&w0)?;
                Ok(OptimizerState::new(w0))
            }
            None => Ok(OptimizerState::new(w0)),
        }
    }

    /// One update with resolved parameters.
    pub fn step(
        &self,
        state: &mut OptimizerState,
        problem: &Problem,
        params: &StepParams,
        fault: Fault,
    ) -> crate::Result<crate::problems::ScaledGradient> {
        match self {
            Algorithm::Gd => gd_step(state, problem, params),
            Algorithm::Momentum => momentum_step(state, problem, params),
            Algorithm::Mirror { potential } => md_step(state, problem, potential, params),
            Algorithm::MirrorConstrained {
                potential,
                constraint,
            } => md_constrained_step(state, problem, potential, constraint, params),
            Algorithm::MirrorDualMomentum { potential } => {
                md_dual_momentum_step(state, problem, potential, params)
            }
            Algorithm::MirrorPrimalMomentum { potential } => {
                md_primal_momentum_step(state, problem, potential, params)
            }
            Algorithm::NaturalGradient { potential } => ngd_step(state, problem, potential, params),
            Algorithm::Steepest { norm, tie } => sd_step(state, problem, norm, *tie, params, fault),
            Algorithm::Coordinate { tie } => coordinate_step(state, problem, *tie, params),
            Algorithm::Adagrad { options } => adagrad_step(state, problem, options, params),
        }
    }
}
