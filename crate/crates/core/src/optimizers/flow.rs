//! Continuous-time limits of the discrete methods, integrated with the
//! Dormand–Prince 5(4) pair under adaptive step control.

use nalgebra::DVector;

use super::Problem;
use crate::error::{Error, Result};
use crate::geometry::{Norm, Potential};

/// Which flow to integrate.
#[derive(Clone, Debug, PartialEq)]
pub enum FlowKind {
    /// `dz/dt = −∇L(∇ψ*(z))`, integrated in dual coordinates.
    Mirror(Potential),
    /// `dw/dt = −∇²ψ(w)⁻¹∇L(w)`, integrated in primal coordinates.
    NaturalGradient(Potential),
    /// `dw/dt = Δw(∇L(w))` for the norm's duality map.
    Steepest(Norm),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            rtol: 1e-10,
            atol: 1e-10,
            initial_step: 1e-3,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowPoint {
    pub time: f64,
    pub w: DVector<f64>,
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct System<'a> {
    kind: &'a FlowKind,
    problem: &'a Problem<'a>,
}

impl System<'_> {
    /// Right-hand side; `Err(Domain)` when `y` leaves the domain.
    fn rhs(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let ds = self.problem.dataset;
        let loss = self.problem.loss;
        match self.kind {
            FlowKind::Mirror(p) => {
                let w = p.grad_inverse(y)?;
                Ok(-ds.gradient(loss, &w, None)?)
            }
            FlowKind::NaturalGradient(p) => {
                let g = ds.gradient(loss, y, None)?;
                Ok(-p.hessian_inverse_apply(y, &g)?)
            }
            FlowKind::Steepest(n) => Ok(n.duality_map(&ds.gradient(loss, y, None)?)),
        }
    }

    fn to_primal(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            FlowKind::Mirror(p) => p.grad_inverse(y),
            _ => Ok(y.clone()),
        }
    }

    fn from_primal(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            FlowKind::Mirror(p) => p.grad(w),
            FlowKind::NaturalGradient(p) => {
                p.check_domain(w)?;
                Ok(w.clone())
            }
            FlowKind::Steepest(_) => Ok(w.clone()),
        }
    }
}

struct Integrator<'a> {
    sys: System<'a>,
    opts: FlowOptions,
    t: f64,
    y: DVector<f64>,
    k1: DVector<f64>,
    h: f64,
    steps: usize,
}

impl<'a> Integrator<'a> {
    fn new(
        kind: &'a FlowKind,
        problem: &'a Problem<'a>,
        start: &DVector<f64>,
        opts: FlowOptions,
    ) -> Result<Self> {
        let sys = System { kind, problem };
        let y = sys.from_primal(start)?;
        let k1 = sys.rhs(&y)?;
        Ok(Integrator {
            sys,
            opts,
            t: 0.0,
            y,
            k1,
            h: opts.initial_step,
            steps: 0,
        })
    }

    /// Attempts one step of size `h`; returns the new state, its derivative
    /// and the scaled error estimate.
    fn attempt(&self, h: f64) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(self.k1.clone());
        for s in 1..7 {
            let mut ys = self.y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            k.push(self.sys.rhs(&ys).ok()?);
        }
        let mut y5 = self.y.clone();
        let mut y4 = self.y.clone();
        for s in 0..7 {
            y5.axpy(h * B5[s], &k[s], 1.0);
            y4.axpy(h * B4[s], &k[s], 1.0);
        }
        let mut err: f64 = 0.0;
        for i in 0..y5.len() {
            let sc = self.opts.atol + self.opts.rtol * self.y[i].abs().max(y5[i].abs());
            err = err.max(((y5[i] - y4[i]) / sc).abs());
        }
        if !err.is_finite() {
            return None;
        }
        Some((y5, k.swap_remove(6), err))
    }

    fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end {
            if self.k1.iter().all(|&v| v == 0.0) {
                self.t = t_end;
                return Ok(());
            }
            if self.steps >= self.opts.max_steps {
                return Err(Error::NonConvergence {
                    solver: "flow integration step budget".into(),
                    residual: self.k1.norm(),
                });
            }
            let h = self.h.min(t_end - self.t);
            match self.attempt(h) {
                Some((y, k, err)) if err <= 1.0 => {
                    self.t = if h == t_end - self.t {
                        t_end
                    } else {
                        self.t + h
                    };
                    self.y = y;
                    self.k1 = k;
                    self.steps += 1;
                    let fac = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    let truncated = h < self.h;
                    self.h = if truncated {
                        self.h.max(h * fac)
                    } else {
                        h * fac
                    };
                }
                Some((_, _, err)) => self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9),
                None => self.h = h * 0.25,
            }
            if self.h < 1e-14 * (1.0 + self.t) {
                return Err(Error::FlowDomainExit { time: self.t });
            }
        }
        Ok(())
    }
}

/// Integrates the flow from `start`, reporting the primal point at each
/// (nondecreasing) time in `times`.
pub fn integrate_flow(
    kind: &FlowKind,
    start: &DVector<f64>,
    problem: &Problem,
    times: &[f64],
    opts: FlowOptions,
) -> Result<Vec<FlowPoint>> {
    let mut integ = Integrator::new(kind, problem, start, opts)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < integ.t {
            return Err(Error::InvalidConfig(
                "flow output times must be nondecreasing".into(),
            ));
        }
        integ.advance_to(t)?;
        out.push(FlowPoint {
            time: t,
            w: integ.sys.to_primal(&integ.y)?,
        });
    }
    Ok(out)
}

/// Integrates until the vector field vanishes to `tol` (relative to its
/// initial size) and returns the final point.
pub fn flow_limit(
    kind: &FlowKind,
    start: &DVector<f64>,
    problem: &Problem,
    tol: f64,
    opts: FlowOptions,
) -> Result<FlowPoint> {
    let mut integ = Integrator::new(kind, problem, start, opts)?;
    let scale = integ.k1.norm().max(1e-300);
    let mut t_end = 1.0;
    while integ.k1.norm() > tol * scale {
        if t_end > 1e12 {
            return Err(Error::NonConvergence {
                solver: "flow limit".into(),
                residual: integ.k1.norm(),
            });
        }
        integ.advance_to(t_end)?;
        t_end *= 2.0;
    }
    Ok(FlowPoint {
        time: integ.t,
        w: integ.sys.to_primal(&integ.y)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{example1, Loss};

    #[test]
    fn euclidean_flow_reaches_affine_projection() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let p = flow_limit(
            &FlowKind::Mirror(Potential::SquaredEuclidean),
            &DVector::from_vec(vec![1.0, 1.0]),
            &prob,
            1e-8,
            FlowOptions::default(),
        )
        .unwrap();
        assert!((p.w[0] - 0.6).abs() < 1e-7 && (p.w[1] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_start_is_stationary() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let w0 = DVector::from_vec(vec![0.6, 0.2]);
        let pts = integrate_flow(
            &FlowKind::Steepest(Norm::l2()),
            &w0,
            &prob,
            &[1.0, 10.0],
            FlowOptions::default(),
        )
        .unwrap();
        assert!(pts.iter().all(|p| (&p.w - &w0).amax() < 1e-15));
    }

    #[test]
    fn mirror_and_natural_gradient_flows_agree() {
        let ds = example1();
        let prob = Problem::new(&ds, Loss::Squared);
        let w0 = DVector::from_vec(vec![1.0, 1.0]);
        let times = [0.05, 0.2, 1.0];
        let a = integrate_flow(
            &FlowKind::Mirror(Potential::Entropy),
            &w0,
            &prob,
            &times,
            FlowOptions::default(),
        )
        .unwrap();
        let b = integrate_flow(
            &FlowKind::NaturalGradient(Potential::Entropy),
            &w0,
            &prob,
            &times,
            FlowOptions::default(),
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((&x.w - &y.w).amax() < 1e-8);
        }
    }
}
