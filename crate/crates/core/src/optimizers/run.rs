use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{BatchSchedule, OptimizerConfig, StepPolicy, StopRule};
use super::steps::{Eta, StepParams};
use super::{Algorithm, OptimizerState, Problem};
use crate::error::Error;
use crate::problems::ScaledGradient;

/// Halvings attempted before a safeguarded step gives up.
const MAX_HALVINGS: u32 = 80;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: usize,
    pub w: DVector<f64>,
    pub z: Option<DVector<f64>>,
    pub log_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    LossTolerance,
    MarginGap,
    Budget,
    Observer,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub final_state: OptimizerState,
    pub stop: StopReason,
    pub iterations: usize,
    /// Total step halvings performed by the safeguard.
    pub halvings: u64,
}

impl Trajectory {
    pub fn final_w(&self) -> &DVector<f64> {
        &self.final_state.w
    }

    pub fn final_log_loss(&self) -> f64 {
        self.snapshots.last().map_or(f64::NAN, |s| s.log_loss)
    }
}

/// A run that stopped on an error, with everything computed before it.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    pub partial: Trajectory,
}

impl From<Box<Aborted>> for Error {
    fn from(a: Box<Aborted>) -> Self {
        a.error
    }
}

/// What the observer sees after each accepted step.
pub struct StepInfo<'a> {
    pub before: &'a OptimizerState,
    pub after: &'a OptimizerState,
    /// Gradient used by the step.
    pub grad: &'a ScaledGradient,
    pub eta: Eta,
    pub log_loss_before: f64,
    pub log_loss_after: f64,
}

fn snapshot(state: &OptimizerState, log_loss: f64) -> Snapshot {
    Snapshot {
        t: state.t,
        w: state.w.clone(),
        z: state.z.clone(),
        log_loss,
    }
}

/// Runs `algorithm` from `w0` under `config`. The observer is called after
/// every step and may end the run by returning `false`.
pub fn run(
    algorithm: &Algorithm,
    problem: &Problem,
    w0: DVector<f64>,
    config: &OptimizerConfig,
    observer: &mut dyn FnMut(&StepInfo) -> bool,
) -> Result<Trajectory, Box<Aborted>> {
    let empty = |state: OptimizerState| Trajectory {
        snapshots: vec![],
        final_state: state,
        stop: StopReason::Budget,
        iterations: 0,
        halvings: 0,
    };
    let fail = |error: Error, partial: Trajectory| Box::new(Aborted { error, partial });

    let ds = problem.dataset;
    if let Err(e) = config
        .validate(ds.n_examples())
        .and_then(|_| ds.check_dim(&w0))
    {
        return Err(fail(e, empty(OptimizerState::new(w0))));
    }
    let mut state = match algorithm.initial_state(w0.clone()) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, empty(OptimizerState::new(w0)))),
    };
    let log_loss_of = |w: &DVector<f64>| ds.log_objective(problem.loss, w);
    let mut log_loss = match log_loss_of(&state.w) {
        Ok(l) => l,
        Err(e) => return Err(fail(e, empty(state))),
    };
    let bound = match config.step {
        StepPolicy::LossAdaptive { .. } => algorithm.step_norm().feature_bound(ds),
        _ => 1.0,
    };
    let mut rng = match config.batch {
        BatchSchedule::Minibatch { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };

    let mut traj = Trajectory {
        snapshots: vec![snapshot(&state, log_loss)],
        final_state: state.clone(),
        stop: StopReason::Budget,
        iterations: 0,
        halvings: 0,
    };
    let mut subset_buf: Vec<usize>;

    for it in 0..config.max_iterations {
        let stop = match &config.stop {
            StopRule::Budget => None,
            StopRule::LossBelow { tol } => {
                (log_loss <= tol.ln()).then_some(StopReason::LossTolerance)
            }
            StopRule::MarginGap { gamma, tol, norm } => {
                let n = norm.value(&state.w);
                let m = ds
                    .margins(&state.w)
                    .map(|m| m.min())
                    .unwrap_or(f64::NEG_INFINITY);
                (n > 0.0 && gamma - m / n <= *tol).then_some(StopReason::MarginGap)
            }
        };
        if let Some(reason) = stop {
            traj.stop = reason;
            break;
        }

        let subset: Option<&[usize]> = match &config.batch {
            BatchSchedule::Full => None,
            BatchSchedule::Cyclic { subsets } => Some(&subsets[it % subsets.len()]),
            BatchSchedule::Minibatch { size, .. } => {
                let r = rng.as_mut().expect("minibatch rng");
                subset_buf = sample(r, ds.n_examples(), *size).into_vec();
                subset_buf.sort_unstable();
                Some(&subset_buf)
            }
        };
        let eta = match config.step {
            StepPolicy::Constant { eta } => Eta::Linear(eta),
            StepPolicy::LossAdaptive { c, eta_max } => Eta::Log(
                super::config::log_step_size_loss_adaptive(c, bound, log_loss, eta_max),
            ),
        };
        let params = StepParams {
            eta,
            beta: config.beta.at(it),
            gamma: config.gamma.at(it),
            subset,
        };

        let mut k = 0u32;
        let (next, grad, next_loss) = loop {
            let mut trial = state.clone();
            let p = StepParams {
                eta: eta.halved(k),
                ..params
            };
            let outcome = algorithm
                .step(&mut trial, problem, &p, config.fault)
                .and_then(|g| log_loss_of(&trial.w).map(|l| (g, l)));
            match outcome {
                Ok((g, l)) if !config.safeguard || l <= log_loss + 1e-12 || k >= MAX_HALVINGS => {
                    break (trial, g, l);
                }
                Ok(_) => k += 1,
                Err(Error::Domain { .. }) if config.safeguard && k < MAX_HALVINGS => k += 1,
                Err(e) => {
                    traj.final_state = state.clone();
                    traj.iterations = it;
                    traj.snapshots.push(snapshot(&state, log_loss));
                    return Err(fail(e, traj));
                }
            }
        };
        traj.halvings += k as u64;
        let info = StepInfo {
            before: &state,
            after: &next,
            grad: &grad,
            eta: eta.halved(k),
            log_loss_before: log_loss,
            log_loss_after: next_loss,
        };
        let keep_going = observer(&info);
        state = next;
        log_loss = next_loss;
        traj.iterations = it + 1;
        if config.cadence > 0 && state.t % config.cadence == 0 {
            traj.snapshots.push(snapshot(&state, log_loss));
        }
        if !keep_going {
            traj.stop = StopReason::Observer;
            break;
        }
    }
    if traj.snapshots.last().map(|s| s.t) != Some(state.t) {
        traj.snapshots.push(snapshot(&state, log_loss));
    }
    traj.final_state = state;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Potential;
    use crate::optimizers::StopRule;
    use crate::problems::{example1, Loss};

    #[test]
    fn entropy_md_reaches_example1_limit() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let cfg =
            OptimizerConfig::constant(0.05, 100_000).with_stop(StopRule::LossBelow { tol: 1e-24 });
        let alg = Algorithm::Mirror {
            potential: Potential::Entropy,
        };
        let tr = run(
            &alg,
            &prob,
            DVector::from_vec(vec![1.0, 1.0]),
            &cfg,
            &mut |_| true,
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::LossTolerance);
        assert!((tr.final_w()[0] - 0.5).abs() < 1e-9 && (tr.final_w()[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn safeguard_keeps_ngd_in_domain() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let alg = Algorithm::NaturalGradient {
            potential: Potential::Entropy,
        };
        let cfg = OptimizerConfig::constant(0.25, 10);
        let err = run(
            &alg,
            &prob,
            DVector::from_vec(vec![1.0, 1.0]),
            &cfg,
            &mut |_| true,
        )
        .unwrap_err();
        assert!(matches!(err.error, Error::Domain { .. }));
        let tr = run(
            &alg,
            &prob,
            DVector::from_vec(vec![1.0, 1.0]),
            &cfg.with_safeguard(true),
            &mut |_| true,
        )
        .unwrap();
        assert!(tr.halvings > 0 && tr.final_w().min() > 0.0);
    }

    #[test]
    fn invalid_config_aborts_before_stepping() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let err = run(
            &Algorithm::Gd,
            &prob,
            DVector::zeros(2),
            &OptimizerConfig::constant(-1.0, 5),
            &mut |_| true,
        )
        .unwrap_err();
        assert!(matches!(err.error, Error::InvalidConfig(_)));
        assert_eq!(err.partial.iterations, 0);
    }

    #[test]
    fn minibatch_runs_replay_exactly() {
        let ds = crate::problems::generate::realizable_regression(4, 8, 3).unwrap();
        let prob = Problem::new(&ds, Loss::Squared);
        let cfg = OptimizerConfig::constant(0.01, 200)
            .with_batch(BatchSchedule::Minibatch { size: 2, seed: 11 });
        let a = run(&Algorithm::Gd, &prob, DVector::zeros(8), &cfg, &mut |_| {
            true
        })
        .unwrap();
        let b = run(&Algorithm::Gd, &prob, DVector::zeros(8), &cfg, &mut |_| {
            true
        })
        .unwrap();
        assert_eq!(a.final_w(), b.final_w());
    }
}
