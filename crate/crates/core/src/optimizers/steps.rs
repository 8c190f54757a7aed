//! Single-step update rules. Each step reads the gradient it needs, updates
//! `state` in place and returns the gradient it used.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::Fault;
use super::{OptimizerState, Problem};
use crate::error::{Error, Result};
use crate::geometry::{coordinate_direction, Norm, Potential, TieRule};
use crate::problems::ScaledGradient;

/// A step size, either directly or as its logarithm (for step sizes that
/// overflow, such as loss-adaptive steps late in an exponential-loss run).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Eta {
    Linear(f64),
    Log(f64),
}

impl Eta {
    /// `η · exp(log_scale)`.
    pub fn times_exp(self, log_scale: f64) -> f64 {
        match self {
            Eta::Linear(eta) if log_scale == 0.0 => eta,
            Eta::Linear(eta) => eta * log_scale.exp(),
            Eta::Log(l) => (l + log_scale).exp(),
        }
    }

    pub fn log(self) -> f64 {
        match self {
            Eta::Linear(eta) => eta.ln(),
            Eta::Log(l) => l,
        }
    }

    pub fn halved(self, k: u32) -> Eta {
        match self {
            Eta::Linear(eta) => Eta::Linear(eta * 0.5f64.powi(k as i32)),
            Eta::Log(l) => Eta::Log(l - k as f64 * std::f64::consts::LN_2),
        }
    }
}

/// Per-step parameters resolved from the configuration.
#[derive(Clone, Copy, Debug)]
pub struct StepParams<'a> {
    pub eta: Eta,
    pub beta: f64,
    pub gamma: f64,
    pub subset: Option<&'a [usize]>,
}

impl<'a> StepParams<'a> {
    pub fn eta(eta: f64) -> Self {
        StepParams {
            eta: Eta::Linear(eta),
            beta: 0.0,
            gamma: 0.0,
            subset: None,
        }
    }

    pub fn momentum(eta: f64, beta: f64, gamma: f64) -> Self {
        StepParams {
            eta: Eta::Linear(eta),
            beta,
            gamma,
            subset: None,
        }
    }

    pub fn with_subset(mut self, subset: Option<&'a [usize]>) -> Self {
        self.subset = subset;
        self
    }
}

/// Affine constraint `G w = h`; zero rows means the whole space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineConstraint {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl AffineConstraint {
    pub fn simplex(d: usize) -> Self {
        AffineConstraint {
            rows: vec![vec![1.0; d]],
            rhs: vec![1.0],
        }
    }

    pub fn none() -> Self {
        AffineConstraint {
            rows: vec![],
            rhs: vec![],
        }
    }

    pub fn matrix(&self, d: usize) -> Result<nalgebra::DMatrix<f64>> {
        if self.rows.len() != self.rhs.len() || self.rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidConfig(
                "affine constraint shape mismatch".into(),
            ));
        }
        Ok(nalgebra::DMatrix::from_row_iterator(
            self.rows.len(),
            d,
            self.rows.iter().flatten().cloned(),
        ))
    }

    pub fn max_violation(&self, w: &DVector<f64>) -> Result<f64> {
        let g = self.matrix(w.len())?;
        let h = DVector::from_column_slice(&self.rhs);
        Ok(if self.rows.is_empty() {
            0.0
        } else {
            (g * w - h).amax()
        })
    }
}

fn check_finite(v: &DVector<f64>, t: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration: t,
            what: what.into(),
        })
    }
}

/// `η∇L(w)` together with the gradient it came from.
fn eta_grad(
    problem: &Problem,
    w: &DVector<f64>,
    p: &StepParams,
    t: usize,
) -> Result<(DVector<f64>, ScaledGradient)> {
    let g = problem.dataset.scaled_gradient(problem.loss, w, p.subset)?;
    check_finite(&g.direction, t, "gradient")?;
    let step = &g.direction * p.eta.times_exp(g.log_scale);
    check_finite(&step, t, "gradient step")?;
    Ok((step, g))
}

fn set_primal(state: &mut OptimizerState, w: DVector<f64>) -> Result<()> {
    check_finite(&w, state.t, "iterate")?;
    state.dw_prev = &w - &state.w;
    state.w = w;
    state.t += 1;
    Ok(())
}

/// `w ← w − η∇L(w)`.
pub fn gd_step(
    state: &mut OptimizerState,
    problem: &Problem,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let (step, g) = eta_grad(problem, &state.w, p, state.t)?;
    let w = &state.w - step;
    set_primal(state, w)?;
    Ok(g)
}

/// `w ← w + βΔw_{t−1} − η∇L(w + γΔw_{t−1})`.
pub fn momentum_step(
    state: &mut OptimizerState,
    problem: &Problem,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let probe = &state.w + &state.dw_prev * p.gamma;
    let (step, g) = eta_grad(problem, &probe, p, state.t)?;
    let w = &state.w + &state.dw_prev * p.beta - step;
    set_primal(state, w)?;
    Ok(g)
}

fn dual_of(state: &OptimizerState, potential: &Potential) -> Result<DVector<f64>> {
    match &state.z {
        Some(z) => Ok(z.clone()),
        None => potential.grad(&state.w),
    }
}

fn set_dual(state: &mut OptimizerState, potential: &Potential, z: DVector<f64>) -> Result<()> {
    check_finite(&z, state.t, "dual iterate")?;
    let w = potential.grad_inverse(&z)?;
    potential.check_domain(&w)?;
    let z_prev = dual_of(state, potential)?;
    state.dz_prev = &z - z_prev;
    state.z = Some(z);
    set_primal(state, w)
}

/// `∇ψ(w) ← ∇ψ(w) − η∇L(w)`.
pub fn md_step(
    state: &mut OptimizerState,
    problem: &Problem,
    potential: &Potential,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let (step, g) = eta_grad(problem, &state.w, p, state.t)?;
    let z = dual_of(state, potential)? - step;
    set_dual(state, potential, z)?;
    Ok(g)
}

/// Mirror step followed by the Bregman projection onto `{G w = h}`.
pub fn md_constrained_step(
    state: &mut OptimizerState,
    problem: &Problem,
    potential: &Potential,
    constraint: &AffineConstraint,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let (step, g) = eta_grad(problem, &state.w, p, state.t)?;
    let z_hat = dual_of(state, potential)? - step;
    if constraint.rows.is_empty() {
        set_dual(state, potential, z_hat)?;
        return Ok(g);
    }
    let gm = constraint.matrix(state.w.len())?;
    let h = DVector::from_column_slice(&constraint.rhs);
    let proj = crate::oracles::project_affine_dual(potential, &gm, &h, &z_hat)?;
    let z = z_hat + gm.tr_mul(&proj.multipliers);
    set_dual(state, potential, z)?;
    Ok(g)
}

/// `z ← z + βΔz_{t−1} − η∇L(w + γΔw_{t−1})`.
pub fn md_dual_momentum_step(
    state: &mut OptimizerState,
    problem: &Problem,
    potential: &Potential,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let probe = &state.w + &state.dw_prev * p.gamma;
    let (step, g) = eta_grad(problem, &probe, p, state.t)?;
    let z = dual_of(state, potential)? + &state.dz_prev * p.beta - step;
    set_dual(state, potential, z)?;
    Ok(g)
}

/// `z ← ∇ψ(w + βΔw_{t−1}) − η∇L(w + γΔw_{t−1})`.
pub fn md_primal_momentum_step(
    state: &mut OptimizerState,
    problem: &Problem,
    potential: &Potential,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let probe = &state.w + &state.dw_prev * p.gamma;
    let (step, g) = eta_grad(problem, &probe, p, state.t)?;
    let anchor = &state.w + &state.dw_prev * p.beta;
    let z = potential.grad(&anchor)? - step;
    set_dual(state, potential, z)?;
    Ok(g)
}

/// `w ← w − η ∇²ψ(w)⁻¹ ∇L(w)`.
pub fn ngd_step(
    state: &mut OptimizerState,
    problem: &Problem,
    potential: &Potential,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let (step, g) = eta_grad(problem, &state.w, p, state.t)?;
    let w = &state.w - potential.hessian_inverse_apply(&state.w, &step)?;
    potential.check_domain(&w)?;
    set_primal(state, w)?;
    Ok(g)
}

/// `w ← w + η Δw(∇L(w))` for the norm's duality map.
pub fn sd_step(
    state: &mut OptimizerState,
    problem: &Problem,
    norm: &Norm,
    tie: TieRule,
    p: &StepParams,
    fault: Fault,
) -> Result<ScaledGradient> {
    let g = problem
        .dataset
        .scaled_gradient(problem.loss, &state.w, p.subset)?;
    check_finite(&g.direction, state.t, "gradient")?;
    let mut dir = norm.duality_map_with(&g.direction, tie);
    if fault == Fault::NegateDualityMap {
        dir = -dir;
    }
    let w = &state.w + dir * p.eta.times_exp(g.log_scale);
    set_primal(state, w)?;
    Ok(g)
}

/// `w ← w + η·conv{−∂_jL e_j : j maximizes |∂_jL|}`.
pub fn coordinate_step(
    state: &mut OptimizerState,
    problem: &Problem,
    tie: TieRule,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let g = problem
        .dataset
        .scaled_gradient(problem.loss, &state.w, p.subset)?;
    check_finite(&g.direction, state.t, "gradient")?;
    let w = &state.w + coordinate_direction(&g.direction, tie) * p.eta.times_exp(g.log_scale);
    set_primal(state, w)?;
    Ok(g)
}

/// AdaGrad options.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdagradOptions {
    /// Initial diagonal; defaults to `max_n‖x_n‖₂⁴` on every coordinate.
    #[serde(default)]
    pub g_init: Option<Vec<f64>>,
    /// Lower bound on the diagonal; without it a zero entry aborts the run.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Keep the diagonal at its initial value.
    #[serde(default)]
    pub frozen: bool,
}

impl AdagradOptions {
    pub fn initial_diagonal(&self, problem: &Problem) -> Result<DVector<f64>> {
        let d = problem.dataset.dim();
        match &self.g_init {
            Some(g) if g.len() != d => Err(Error::DimensionMismatch {
                expected: d,
                found: g.len(),
            }),
            Some(g) if g.iter().any(|&x| !(x >= 0.0)) => Err(Error::InvalidConfig(
                "AdaGrad initial diagonal must be nonnegative".into(),
            )),
            Some(g) => Ok(DVector::from_column_slice(g)),
            None => {
                let b = (0..problem.dataset.n_examples())
                    .map(|n| problem.dataset.feature(n).norm())
                    .fold(0.0, f64::max);
                Ok(DVector::from_element(d, b.powi(4)))
            }
        }
    }
}

/// `G ← G + ∇L(w)²`, then `w ← w − η G^{−1/2} ∇L(w)`.
pub fn adagrad_step(
    state: &mut OptimizerState,
    problem: &Problem,
    opts: &AdagradOptions,
    p: &StepParams,
) -> Result<ScaledGradient> {
    let g = problem.dataset.gradient(problem.loss, &state.w, p.subset)?;
    check_finite(&g, state.t, "gradient")?;
    let mut acc = match state.accumulator.take() {
        Some(a) => a,
        None => opts.initial_diagonal(problem)?,
    };
    if !opts.frozen {
        acc += g.component_mul(&g);
    }
    let floor = opts.epsilon.unwrap_or(0.0);
    if let Some(i) = acc.iter().position(|&x| x.max(floor) <= 0.0) {
        state.accumulator = Some(acc);
        return Err(Error::NonFinite {
            iteration: state.t,
            what: format!("zero AdaGrad diagonal at coordinate {i}"),
        });
    }
    let eta = p.eta.times_exp(0.0);
    let w = &state.w - g.zip_map(&acc, |gi, ai| eta * gi / ai.max(floor).sqrt());
    state.accumulator = Some(acc);
    set_primal(state, w)?;
    Ok(ScaledGradient {
        log_scale: 0.0,
        direction: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{example1, Loss};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn gd_example1() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let mut s = OptimizerState::new(v(&[1.0, 1.0]));
        gd_step(&mut s, &prob, &StepParams::eta(0.1)).unwrap();
        assert!((s.w.clone() - v(&[0.6, 0.2])).amax() < 1e-15);
        let mut s0 = OptimizerState::new(v(&[1.0, 1.0]));
        gd_step(&mut s0, &prob, &StepParams::eta(0.0)).unwrap();
        assert_eq!(s0.w, v(&[1.0, 1.0]));
    }

    #[test]
    fn md_entropy_example1_first_step() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let mut s = OptimizerState::new(v(&[1.0, 1.0]));
        md_step(&mut s, &prob, &Potential::Entropy, &StepParams::eta(0.05)).unwrap();
        assert!(
            (s.w[0] - (-0.2f64).exp()).abs() < 1e-15 && (s.w[1] - (-0.4f64).exp()).abs() < 1e-15
        );
    }

    #[test]
    fn adagrad_accumulates_from_zero() {
        let ds = crate::problems::Dataset::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[3.0 / 2.0, 2.0],
            crate::problems::Task::Regression,
        )
        .unwrap();
        let prob = Problem::new(&ds, Loss::Squared);
        // gradient at 0 is 2(0 − y)x = [−3, −4]
        let mut s = OptimizerState::new(DVector::zeros(2));
        let opts = AdagradOptions {
            g_init: Some(vec![0.0, 0.0]),
            ..Default::default()
        };
        adagrad_step(&mut s, &prob, &opts, &StepParams::eta(0.1)).unwrap();
        assert_eq!(s.accumulator.clone().unwrap(), v(&[9.0, 16.0]));
    }

    #[test]
    fn adagrad_zero_diagonal_aborts_without_floor() {
        let ds = crate::problems::Dataset::from_rows(
            &[vec![1.0, 0.0]],
            &[1.0],
            crate::problems::Task::Regression,
        )
        .unwrap();
        let prob = Problem::new(&ds, Loss::Squared);
        let opts = AdagradOptions {
            g_init: Some(vec![0.0, 0.0]),
            ..Default::default()
        };
        let mut s = OptimizerState::new(DVector::zeros(2));
        assert!(adagrad_step(&mut s, &prob, &opts, &StepParams::eta(0.1)).is_err());
        let opts = AdagradOptions {
            epsilon: Some(1e-8),
            ..opts
        };
        let mut s = OptimizerState::new(DVector::zeros(2));
        assert!(adagrad_step(&mut s, &prob, &opts, &StepParams::eta(0.1)).is_ok());
    }

    #[test]
    fn primal_momentum_can_leave_entropy_domain() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let mut s = OptimizerState::new(v(&[1.0, 1.0]));
        s.dw_prev = v(&[-2.0, 0.0]);
        let err = md_primal_momentum_step(
            &mut s,
            &prob,
            &Potential::Entropy,
            &StepParams::momentum(0.01, 0.9, 0.0),
        );
        assert!(matches!(err, Err(Error::Domain { .. })));
    }

    #[test]
    fn eta_forms_agree() {
        assert_eq!(Eta::Linear(0.1).times_exp(0.0), 0.1);
        assert!((Eta::Log(0.1f64.ln()).times_exp(2.0) - 0.1 * 2f64.exp()).abs() < 1e-15);
        assert_eq!(Eta::Linear(1.0).halved(3), Eta::Linear(0.125));
    }
}
