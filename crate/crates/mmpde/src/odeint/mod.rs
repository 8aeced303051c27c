//! Time integrators: adaptive explicit Runge-Kutta and adaptive implicit
//! (stiff) integration for mesh equations, plus a 3-stage Radau IIA stepper
//! with a two-step error estimator for the physical PDEs.

mod explicit;
mod radau;
mod stiff;

pub use explicit::integrate_explicit;
pub use radau::{
    two_step_error, CollocationStep, ImplicitSystem, RadauIntegrator, RadauOptions, RadauReject,
    RadauStep,
};
pub use stiff::integrate_stiff;

use crate::sparse::LinAlgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("step rejected {count} times in a row at t = {t}; try a smaller initial time step dt0")]
    TooManyRejections { t: f64, count: usize },
    #[error("Newton iteration failed to converge at t = {t}")]
    NewtonFailure { t: f64 },
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error("invalid problem: {0}")]
    BadInput(String),
    #[error("solution became non-finite at t = {t}")]
    NonFinite { t: f64 },
}

/// An explicit first-order ODE system `y' = rhs(t, y)` with integration
/// controls. `sparsity` (closed neighbor lists per component) enables a
/// colored finite-difference Jacobian in the stiff integrator;
/// `accept_check` vetoes steps (the step is halved on veto); `post_step`
/// runs on the state after each accepted step.
pub struct OdeProblem<'a> {
    pub rhs: &'a (dyn Fn(f64, &[f64], &mut [f64]) + 'a),
    pub y0: &'a [f64],
    pub tspan: [f64; 2],
    pub abstol: f64,
    pub reltol: f64,
    pub dt0: f64,
    pub sparsity: Option<&'a [Vec<usize>]>,
    pub accept_check: Option<&'a (dyn Fn(&[f64]) -> bool + 'a)>,
    pub post_step: Option<&'a (dyn Fn(f64, &mut [f64]) + 'a)>,
}

impl<'a> OdeProblem<'a> {
    pub fn new(
        rhs: &'a (dyn Fn(f64, &[f64], &mut [f64]) + 'a),
        y0: &'a [f64],
        tspan: [f64; 2],
    ) -> Self {
        let dt0 = (tspan[1] - tspan[0]) / 10.0;
        Self {
            rhs,
            y0,
            tspan,
            abstol: 1e-6,
            reltol: 1e-3,
            dt0,
            sparsity: None,
            accept_check: None,
            post_step: None,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), OdeError> {
        if self.tspan[1] <= self.tspan[0] {
            return Err(OdeError::BadInput("tspan must be increasing".into()));
        }
        if self.abstol <= 0.0 || self.reltol < 0.0 || self.dt0 <= 0.0 {
            return Err(OdeError::BadInput("tolerances and dt0 must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted step of an adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub err: f64,
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub y_end: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

/// Weighted RMS norm of `err` against `abstol + reltol * |y_ref|`; optional
/// nonnegative component weights (zero excludes a component).
pub(crate) fn wrms(
    err: &[f64],
    y_ref: &[f64],
    abstol: f64,
    reltol: f64,
    weights: Option<&[f64]>,
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..err.len() {
        let w = weights.map(|w| w[i]).unwrap_or(1.0);
        if w <= 0.0 {
            continue;
        }
        let scale = abstol + reltol * y_ref[i].abs();
        let v = w * err[i] / scale;
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// The shared step controller: `dt * min(5, max(0.2, 0.9 (1/err)^(1/expo)))`.
pub(crate) fn controller(dt: f64, err: f64, expo: f64) -> f64 {
    let factor = if err <= 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-1.0 / expo)).clamp(0.2, 5.0)
    };
    dt * factor
}

pub(crate) const MAX_VETOES: usize = 20;
