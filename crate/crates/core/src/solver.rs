//! Fixed-step implicit Euler and trapezoidal integration of `F(t, x, x') = 0`,
//! and the shuffle algorithm for the index of a linear pencil.

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::formulations::{check_consistency, EvalError, FormulationError, ImplicitSystem};
use crate::linalg::{rank, row_compression, LinalgError};
use crate::RANK_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    ImplicitEuler,
    Trapezoidal,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::ImplicitEuler => "ie",
            Scheme::Trapezoidal => "tr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub step: f64,
    pub t0: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Implicit Euler steps taken before switching to `scheme`.
    pub startup_ie_steps: usize,
    /// Abort on the first Newton failure; otherwise flag it and continue.
    pub strict: bool,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, step: f64, t_end: f64) -> Self {
        Self {
            scheme,
            step,
            t0: 0.0,
            t_end,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            startup_ie_steps: 0,
            strict: true,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(ConfigError::Step(self.step));
        }
        if !(self.t_end > self.t0 && self.t_end.is_finite()) {
            return Err(ConfigError::Interval {
                t0: self.t0,
                t_end: self.t_end,
            });
        }
        if self.newton_tol.is_nan() || self.newton_tol <= 0.0 || self.newton_max_iter == 0 {
            return Err(ConfigError::Tolerance);
        }
        Ok(())
    }

    /// Number of steps; the last grid point is the first one at or past `t_end`.
    pub fn step_count(&self) -> usize {
        libm::ceil((self.t_end - self.t0) / self.step - 1e-9) as usize
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("step size must be positive and finite, got {0}")]
    Step(f64),
    #[error("end time {t_end} must be finite and greater than start time {t0}")]
    Interval { t0: f64, t_end: f64 },
    #[error("Newton tolerance and iteration limit must be positive")]
    Tolerance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NewtonError {
    #[error("Newton did not converge in {iterations} iterations (residual {residual_norm:e})")]
    MaxIterations {
        last: DVector<f64>,
        iterations: usize,
        residual_norm: f64,
    },
    #[error("singular Newton matrix (residual {residual_norm:e})")]
    SingularJacobian {
        last: DVector<f64>,
        residual_norm: f64,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl NewtonError {
    pub fn last_iterate(&self) -> Option<&DVector<f64>> {
        match self {
            NewtonError::MaxIterations { last, .. }
            | NewtonError::SingularJacobian { last, .. } => Some(last),
            NewtonError::Eval(_) => None,
        }
    }
}

/// Undamped Newton iteration.
///
/// Converged when `||F(x)|| <= tol (1 + ||x||)`, or, after at least one
/// update, when the update itself satisfies `||dx|| <= tol (1 + ||x||)`. The
/// second test covers systems whose residual roundoff sits above `tol`
/// because of large coefficients.
pub fn newton_solve<F, J>(
    mut residual: F,
    mut jacobian: J,
    guess: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome, NewtonError>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, EvalError>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>, EvalError>,
{
    let mut x = guess;
    let mut r = residual(&x)?;
    for iterations in 0..=max_iter {
        let scale = tol * (1.0 + x.norm());
        if r.norm() <= scale {
            return Ok(NewtonOutcome {
                residual_norm: r.norm(),
                x,
                iterations,
            });
        }
        if iterations == max_iter {
            break;
        }
        let j = jacobian(&x)?;
        let dx = match solve_dense(j, &r) {
            Some(dx) => dx,
            None => {
                return Err(NewtonError::SingularJacobian {
                    residual_norm: r.norm(),
                    last: x,
                })
            }
        };
        x -= &dx;
        r = residual(&x)?;
        if dx.norm() <= tol * (1.0 + x.norm()) {
            return Ok(NewtonOutcome {
                residual_norm: r.norm(),
                x,
                iterations: iterations + 1,
            });
        }
    }
    Err(NewtonError::MaxIterations {
        residual_norm: r.norm(),
        last: x,
        iterations: max_iter,
    })
}

/// LU solve; `None` when a pivot is negligible relative to the largest.
fn solve_dense(m: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if m.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let lu = m.lu();
    let u = lu.u();
    let diag = u.diagonal().abs();
    let max = diag.max();
    if max.is_nan() || max <= 0.0 || diag.min() <= 1e-14 * max {
        return None;
    }
    let x = lu.solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
    pub iterations: usize,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("step {step} to t = {t}: {source}")]
pub struct StepError {
    pub step: usize,
    pub t: f64,
    #[source]
    pub source: NewtonError,
}

/// Stage derivative the scheme assigns to a candidate `x_{n+1}`.
fn stage_derivative(
    scheme: Scheme,
    tau: f64,
    x: &DVector<f64>,
    x_n: &DVector<f64>,
    xdot_n: &DVector<f64>,
) -> DVector<f64> {
    match scheme {
        Scheme::ImplicitEuler => (x - x_n) / tau,
        Scheme::Trapezoidal => (x - x_n) * (2.0 / tau) - xdot_n,
    }
}

/// One step from `(t_n, x_n, x'_n)` to `t_n + tau`. Newton starts from
/// whichever of `x_n` and the predictor `x_n + tau x'_n` has the smaller
/// residual.
#[allow(clippy::too_many_arguments)]
pub fn step<S: ImplicitSystem + ?Sized>(
    dae: &S,
    scheme: Scheme,
    t_n: f64,
    x_n: &DVector<f64>,
    xdot_n: &DVector<f64>,
    tau: f64,
    tol: f64,
    max_iter: usize,
) -> Result<StepOutcome, NewtonError> {
    let t = t_n + tau;
    let dxdot_dx = match scheme {
        Scheme::ImplicitEuler => 1.0 / tau,
        Scheme::Trapezoidal => 2.0 / tau,
    };
    let predicted = x_n + xdot_n * tau;
    let residual_at =
        |x: &DVector<f64>| dae.residual(t, x, &stage_derivative(scheme, tau, x, x_n, xdot_n));
    let guess = match (residual_at(&predicted), residual_at(x_n)) {
        (Ok(p), Ok(c)) if c.norm() < p.norm() => x_n.clone(),
        (Err(_), Ok(_)) => x_n.clone(),
        _ => predicted,
    };
    let outcome = newton_solve(
        residual_at,
        |x| {
            let (j_x, j_xdot) =
                dae.jacobians(t, x, &stage_derivative(scheme, tau, x, x_n, xdot_n))?;
            Ok(j_x + j_xdot * dxdot_dx)
        },
        guess,
        tol,
        max_iter,
    )?;
    let xdot = stage_derivative(scheme, tau, &outcome.x, x_n, xdot_n);
    Ok(StepOutcome {
        saturated: dae.saturated(&outcome.x, &xdot),
        x: outcome.x,
        xdot,
        iterations: outcome.iterations,
    })
}

/// Accepted samples of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Stage derivatives; entry 0 is the initial derivative.
    pub derivatives: Vec<DVector<f64>>,
    /// Newton iterations per sample (0 for the initial sample).
    pub iterations: Vec<usize>,
    /// Scheme used for the step ending at each sample after the first.
    pub step_schemes: Vec<Scheme>,
    /// Samples where a device clamp was active.
    pub saturated: Vec<usize>,
    /// Samples accepted without Newton convergence (tolerant mode only).
    pub failures: Vec<usize>,
    pub initially_consistent: bool,
    pub initial_residual: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_iterations(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }

    /// One component of the state over time.
    pub fn state_series(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[index]).collect()
    }

    pub fn derivative_series(&self, index: usize) -> Vec<f64> {
        self.derivatives.iter().map(|x| x[index]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("initial state has length {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("initialization failed: {0}")]
    Initialization(#[from] FormulationError),
    #[error("{error}")]
    Step {
        error: StepError,
        /// Samples accepted before the failure.
        partial: Box<Trajectory>,
    },
}

/// Integrate from `x0` over the configured uniform grid.
///
/// `xdot0` defaults to the consistent-derivative solve; an inconsistent `x0`
/// is recorded on the trajectory, not rejected.
pub fn simulate<S: ImplicitSystem + ?Sized>(
    dae: &S,
    config: &IntegratorConfig,
    x0: &DVector<f64>,
    xdot0: Option<DVector<f64>>,
) -> Result<Trajectory, SimulationError> {
    config.validate()?;
    if x0.len() != dae.dim() {
        return Err(SimulationError::Dimension {
            expected: dae.dim(),
            found: x0.len(),
        });
    }
    let consistency = check_consistency(dae, config.t0, x0)?;
    let xdot0 = xdot0.unwrap_or_else(|| consistency.xdot0.clone());
    let steps = config.step_count();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        derivatives: Vec::with_capacity(steps + 1),
        iterations: Vec::with_capacity(steps + 1),
        step_schemes: Vec::with_capacity(steps),
        initially_consistent: consistency.consistent,
        initial_residual: consistency.residual_norm,
        ..Trajectory::default()
    };
    traj.times.push(config.t0);
    traj.iterations.push(0);
    if dae.saturated(x0, &xdot0) {
        traj.saturated.push(0);
    }
    traj.states.push(x0.clone());
    traj.derivatives.push(xdot0);

    for n in 0..steps {
        let scheme = if n < config.startup_ie_steps {
            Scheme::ImplicitEuler
        } else {
            config.scheme
        };
        let t_n = config.time(n);
        let tau = config.time(n + 1) - t_n;
        let result = step(
            dae,
            scheme,
            t_n,
            &traj.states[n],
            &traj.derivatives[n],
            tau,
            config.newton_tol,
            config.newton_max_iter,
        );
        let outcome = match result {
            Ok(outcome) => outcome,
            Err(source) if config.strict || source.last_iterate().is_none() => {
                return Err(SimulationError::Step {
                    error: StepError {
                        step: n + 1,
                        t: config.time(n + 1),
                        source,
                    },
                    partial: Box::new(traj),
                });
            }
            Err(source) => {
                let x = source
                    .last_iterate()
                    .cloned()
                    .unwrap_or_else(|| traj.states[n].clone());
                let xdot = stage_derivative(scheme, tau, &x, &traj.states[n], &traj.derivatives[n]);
                traj.failures.push(n + 1);
                StepOutcome {
                    saturated: dae.saturated(&x, &xdot),
                    x,
                    xdot,
                    iterations: config.newton_max_iter,
                }
            }
        };
        if outcome.saturated {
            traj.saturated.push(n + 1);
        }
        traj.times.push(config.time(n + 1));
        traj.states.push(outcome.x);
        traj.derivatives.push(outcome.xdot);
        traj.iterations.push(outcome.iterations);
        traj.step_schemes.push(scheme);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("pencil matrices must be square and of equal size")]
    Shape,
    #[error("pencil is singular: leading matrix still rank deficient after {shuffles} shuffles")]
    SingularPencil { shuffles: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Differentiation index of `E x' + A x = b` by the shuffle algorithm.
///
/// Each round compresses the rows of `E` with its left singular vectors,
/// moves the algebraic rows of `A` into the leading matrix (differentiating
/// them), and counts one shuffle, until `E` is nonsingular.
pub fn numerical_index(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<usize, IndexError> {
    let n = e.nrows();
    if e.ncols() != n || a.shape() != (n, n) {
        return Err(IndexError::Shape);
    }
    let mut e = e.clone();
    let mut a = a.clone();
    for shuffles in 0..=n + 1 {
        if rank(&e, RANK_TOL)? == n {
            return Ok(shuffles);
        }
        let (u, r) = row_compression(&e, RANK_TOL)?;
        let ue = u.transpose() * &e;
        let ua = u.transpose() * &a;
        let mut next_e = DMatrix::zeros(n, n);
        let mut next_a = DMatrix::zeros(n, n);
        next_e.rows_mut(0, r).copy_from(&ue.rows(0, r));
        next_e.rows_mut(r, n - r).copy_from(&ua.rows(r, n - r));
        next_a.rows_mut(0, r).copy_from(&ua.rows(0, r));
        e = next_e;
        a = next_a;
    }
    Err(IndexError::SingularPencil { shuffles: n + 1 })
}
