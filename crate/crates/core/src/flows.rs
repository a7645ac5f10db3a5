//! Continuous flows `ẋ = v(x)`: vector fields, finite-difference Jacobians,
//! fixed-step integrators and trajectories with monitored quantities.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative step for central differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Residual bound for the implicit midpoint stage equation.
pub const MIDPOINT_TOLERANCE: f64 = 1e-12;

/// Iteration cap for the implicit midpoint stage equation.
pub const MIDPOINT_MAX_ITERATIONS: usize = 100;

pub type FieldFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
pub type JacobianFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
pub type GuardFn = dyn Fn(&[f64]) -> Result<()> + Send + Sync;
pub type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A smooth map `v: R^N -> R^N`, optionally with its analytic Jacobian.
///
/// A field may also carry a guard, which the integrators consult before and
/// after every step to reject states where the field is not defined (for
/// example colliding point vortices).
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: Arc<FieldFn>,
    jacobian: Option<Arc<JacobianFn>>,
    guard: Option<Arc<GuardFn>>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("guarded", &self.guard.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        assert!(dim > 0, "vector field dimension must be positive");
        Self {
            dim,
            eval: Arc::new(eval),
            jacobian: None,
            guard: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_guard<G>(mut self, guard: G) -> Self
    where
        G: Fn(&[f64]) -> Result<()> + Send + Sync + 'static,
    {
        self.guard = Some(Arc::new(guard));
        self
    }

    /// Linear field `v(x) = A x`.
    pub fn linear(a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "linear field needs a square matrix");
        let dim = a.nrows();
        let jac = a.clone();
        Self::new(dim, move |x| (&a * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec())
            .with_jacobian(move |_| jac.clone())
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, move |_| vec![0.0; dim]).with_jacobian(move |_| DMatrix::zeros(dim, dim))
    }

    /// The planar rotation `v = (x2, -x1)`.
    pub fn rotation() -> Self {
        Self::linear(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let out = (self.eval)(x);
        debug_assert_eq!(out.len(), self.dim, "field output has wrong length");
        out
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    /// Analytic Jacobian when available, central differences otherwise.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => Ok(j(x)),
            None => jacobian_fd(self, x, DEFAULT_FD_STEP),
        }
    }

    /// Runs the guard, if any.
    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        match &self.guard {
            Some(g) => g(x),
            None => Ok(()),
        }
    }
}

/// Per-coordinate step `h * max(1, |x_n|)`.
#[inline]
pub fn scaled_step(h: f64, xn: f64) -> f64 {
    h * xn.abs().max(1.0)
}

fn ensure_finite(x: &[f64], what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

/// Central-difference Jacobian `J[m][n] = ∂f_m/∂x_n` of an arbitrary map with
/// `out_dim` outputs.
pub fn jacobian_fd_map<F>(f: F, out_dim: usize, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    ensure_finite(x, "state")?;
    assert!(h > 0.0, "finite-difference step must be positive");
    let n = x.len();
    let mut jac = DMatrix::zeros(out_dim, n);
    let mut probe = x.to_vec();
    for col in 0..n {
        let step = scaled_step(h, x[col]);
        probe[col] = x[col] + step;
        let plus = f(&probe);
        probe[col] = x[col] - step;
        let minus = f(&probe);
        probe[col] = x[col];
        if plus.len() != out_dim || minus.len() != out_dim {
            return Err(Error::Dimension {
                expected: out_dim,
                got: plus.len().min(minus.len()),
            });
        }
        for row in 0..out_dim {
            let d = (plus[row] - minus[row]) / (2.0 * step);
            if !d.is_finite() {
                return Err(Error::Evaluation { coordinate: col });
            }
            jac[(row, col)] = d;
        }
    }
    Ok(jac)
}

/// Central-difference gradient of a scalar function.
pub fn gradient_fd<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    ensure_finite(x, "state")?;
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for n in 0..x.len() {
        let step = scaled_step(h, x[n]);
        probe[n] = x[n] + step;
        let plus = f(&probe);
        probe[n] = x[n] - step;
        let minus = f(&probe);
        probe[n] = x[n];
        let d = (plus - minus) / (2.0 * step);
        if !d.is_finite() {
            return Err(Error::Evaluation { coordinate: n });
        }
        grad.push(d);
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector field.
pub fn jacobian_fd(v: &VectorField, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    if x.len() != v.dim() {
        return Err(Error::Dimension {
            expected: v.dim(),
            got: x.len(),
        });
    }
    jacobian_fd_map(|p| v.eval(p), v.dim(), x, h)
}

/// Trace of the finite-difference Jacobian.
pub fn divergence_fd(v: &VectorField, x: &[f64], h: f64) -> Result<f64> {
    Ok(jacobian_fd(v, x, h)?.trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    #[serde(alias = "midpoint")]
    ImplicitMidpoint,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "midpoint" | "implicit_midpoint" => Ok(Method::ImplicitMidpoint),
            other => Err(Error::Config(format!("unknown integration method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_end: f64) -> Self {
        Self {
            method: Method::Rk4,
            dt,
            t_end,
            record_every: 1,
        }
    }

    pub fn midpoint(dt: f64, t_end: f64) -> Self {
        Self {
            method: Method::ImplicitMidpoint,
            ..Self::rk4(dt, t_end)
        }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.dt > self.t_end {
            return Err(Error::Config(format!(
                "dt = {} exceeds t_end = {}",
                self.dt, self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened so the run ends exactly at `t_end`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt - 1e-9).ceil() as usize).max(1)
    }

    fn time_at(&self, k: usize, steps: usize) -> f64 {
        if k >= steps {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }
}

/// A named scalar quantity evaluated at every recorded sample.
#[derive(Clone)]
pub struct Monitor {
    name: String,
    f: Arc<ScalarFn>,
}

impl Monitor {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Monitor").field(&self.name).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSeries {
    pub name: String,
    pub values: Vec<f64>,
}

/// Drift of a monitored quantity relative to its initial value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Drift {
    pub name: String,
    pub initial: f64,
    pub max_drift_abs: f64,
    /// `max_drift_abs / max(1, |initial|)`
    pub max_drift_rel: f64,
}

impl Drift {
    pub fn of_series(name: &str, values: &[f64]) -> Self {
        let initial = values.first().copied().unwrap_or(0.0);
        let max_drift_abs = values
            .iter()
            .map(|v| (v - initial).abs())
            .fold(0.0, f64::max);
        Self {
            name: name.to_string(),
            initial,
            max_drift_abs,
            max_drift_rel: max_drift_abs / initial.abs().max(1.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub monitors: Vec<MonitorSeries>,
}

impl Trajectory {
    fn with_monitors(monitors: &[Monitor]) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            monitors: monitors
                .iter()
                .map(|m| MonitorSeries {
                    name: m.name().to_string(),
                    values: Vec::new(),
                })
                .collect(),
        }
    }

    fn record(&mut self, t: f64, x: &[f64], monitors: &[Monitor]) {
        self.times.push(t);
        self.states.push(x.to_vec());
        for (series, m) in self.monitors.iter_mut().zip(monitors) {
            series.values.push(m.eval(x));
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    pub fn monitor(&self, name: &str) -> Option<&[f64]> {
        self.monitors
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.values.as_slice())
    }

    pub fn drift(&self, name: &str) -> Option<Drift> {
        self.monitor(name).map(|v| Drift::of_series(name, v))
    }

    pub fn drifts(&self) -> Vec<Drift> {
        self.monitors
            .iter()
            .map(|s| Drift::of_series(&s.name, &s.values))
            .collect()
    }

    /// Checks the structural invariants: strictly increasing times and
    /// aligned state and monitor arrays.
    pub fn is_consistent(&self) -> bool {
        self.states.len() == self.times.len()
            && self.times.windows(2).all(|w| w[0] < w[1])
            && self.monitors.iter().all(|s| s.values.len() == self.times.len())
    }
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step(v: &VectorField, x: &[f64], h: f64) -> Vec<f64> {
    let k1 = v.eval(x);
    let k2 = v.eval(&axpy(x, 0.5 * h, &k1));
    let k3 = v.eval(&axpy(x, 0.5 * h, &k2));
    let k4 = v.eval(&axpy(x, h, &k3));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One implicit midpoint step, `x' = x + h v((x + x') / 2)`, solved by
/// fixed-point iteration.
pub fn midpoint_step(v: &VectorField, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let scale = x.iter().fold(1.0_f64, |m, xi| m.max(xi.abs()));
    let mut next = axpy(x, h, &v.eval(x));
    let mut residual = f64::INFINITY;
    for _ in 0..MIDPOINT_MAX_ITERATIONS {
        let mid: Vec<f64> = x.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        let candidate = axpy(x, h, &v.eval(&mid));
        residual = candidate
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        next = candidate;
        if !residual.is_finite() {
            break;
        }
        if residual <= MIDPOINT_TOLERANCE * scale {
            return Ok(next);
        }
    }
    Err(Error::Convergence {
        iterations: MIDPOINT_MAX_ITERATIONS,
        residual,
    })
}

/// Integrates `v` from `x0` over `[0, t_end]`.
pub fn integrate(
    v: &VectorField,
    x0: &[f64],
    cfg: &IntegratorConfig,
    monitors: &[Monitor],
) -> Result<Trajectory> {
    let (traj, status) = integrate_partial(v, x0, cfg, monitors);
    status.map(|_| traj)
}

/// Like [`integrate`], but hands back the samples recorded before a failure
/// together with the failure itself.
pub fn integrate_partial(
    v: &VectorField,
    x0: &[f64],
    cfg: &IntegratorConfig,
    monitors: &[Monitor],
) -> (Trajectory, Result<()>) {
    let mut traj = Trajectory::with_monitors(monitors);
    if let Err(e) = cfg.validate() {
        return (traj, Err(e));
    }
    if x0.len() != v.dim() {
        return (
            traj,
            Err(Error::Dimension {
                expected: v.dim(),
                got: x0.len(),
            }),
        );
    }
    if x0.iter().any(|c| !c.is_finite()) {
        return (traj, Err(Error::NonFinite { what: "initial state" }));
    }
    if let Err(e) = v.check_state(x0) {
        return (traj, Err(e));
    }

    let steps = cfg.steps();
    let mut x = x0.to_vec();
    traj.record(0.0, &x, monitors);
    for k in 0..steps {
        let t = cfg.time_at(k, steps);
        let t_next = cfg.time_at(k + 1, steps);
        let h = t_next - t;
        let next = match cfg.method {
            Method::Rk4 => rk4_step(v, &x, h),
            Method::ImplicitMidpoint => match midpoint_step(v, &x, h) {
                Ok(n) => n,
                Err(e) => return (traj, Err(e)),
            },
        };
        if next.iter().any(|c| !c.is_finite()) {
            return (traj, Err(Error::BlowUp { t_last: t }));
        }
        if let Err(e) = v.check_state(&next) {
            return (traj, Err(e));
        }
        x = next;
        if (k + 1) % cfg.record_every == 0 || k + 1 == steps {
            traj.record(t_next, &x, monitors);
        }
    }
    (traj, Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation_error(dt: f64, t_end: f64) -> f64 {
        let traj = integrate(
            &VectorField::rotation(),
            &[1.0, 0.0],
            &IntegratorConfig::rk4(dt, t_end),
            &[],
        )
        .unwrap();
        let x = traj.final_state().unwrap();
        // closed form: (cos t, -sin t)
        (x[0] - t_end.cos()).abs().max((x[1] + t_end.sin()).abs())
    }

    #[test]
    fn linear_field_jacobian_is_exact() {
        let j = jacobian_fd(&VectorField::rotation(), &[0.3, -7.0], DEFAULT_FD_STEP).unwrap();
        assert_eq!(j.nrows(), 2);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((j - expected).amax() <= 1e-9);
    }

    #[test]
    fn zero_field_has_zero_jacobian() {
        let j = jacobian_fd(&VectorField::zero(3), &[1.0, 2.0, 3.0], DEFAULT_FD_STEP).unwrap();
        assert_eq!(j.amax(), 0.0);
    }

    #[test]
    fn divergence_examples() {
        let id = VectorField::new(1, |x| vec![x[0]]);
        assert!((divergence_fd(&id, &[0.7], DEFAULT_FD_STEP).unwrap() - 1.0).abs() < 1e-10);
        let rot = divergence_fd(&VectorField::rotation(), &[0.2, 0.9], DEFAULT_FD_STEP).unwrap();
        assert!(rot.abs() < 1e-12);
    }

    #[test]
    fn non_finite_stencil_names_coordinate() {
        let v = VectorField::new(2, |x| vec![x[0], (x[1] - 1.0).ln()]);
        let err = jacobian_fd(&v, &[0.0, 1.0 + 5e-6], DEFAULT_FD_STEP).unwrap_err();
        assert_eq!(err, Error::Evaluation { coordinate: 1 });
    }

    #[test]
    fn rotation_reaches_half_turn() {
        let traj = integrate(
            &VectorField::rotation(),
            &[1.0, 0.0],
            &IntegratorConfig::rk4(1e-3, PI),
            &[],
        )
        .unwrap();
        let x = traj.final_state().unwrap();
        assert!((x[0] + 1.0).abs() < 1e-6 && x[1].abs() < 1e-6, "{x:?}");
        assert_eq!(*traj.times.last().unwrap(), PI);
        assert!(traj.is_consistent());
    }

    #[test]
    fn zero_field_trajectory_is_constant() {
        let x0 = [0.5, -1.5, 2.0];
        let cfg = IntegratorConfig::midpoint(0.1, 1.0).record_every(3);
        let traj = integrate(&VectorField::zero(3), &x0, &cfg, &[]).unwrap();
        assert!(traj.states.iter().all(|s| s == &x0));
        // samples at steps 0, 3, 6, 9 and the final step 10
        assert_eq!(traj.len(), 5);
        assert!(traj.is_consistent());
    }

    #[test]
    fn rk4_halving_ratio() {
        let ratio = rotation_error(0.1, 10.0) / rotation_error(0.05, 10.0);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn midpoint_conserves_quadratic_invariant() {
        let radius = Monitor::new("r2", |x| x[0] * x[0] + x[1] * x[1]);
        let traj = integrate(
            &VectorField::rotation(),
            &[1.0, 0.0],
            &IntegratorConfig::midpoint(0.05, 20.0),
            &[radius],
        )
        .unwrap();
        assert!(traj.drift("r2").unwrap().max_drift_abs < 1e-11);
    }

    #[test]
    fn blow_up_is_reported_with_last_finite_time() {
        // x' = x^2 from x0 = 1 blows up at t = 1
        let v = VectorField::new(1, |x| vec![x[0] * x[0]]);
        let (traj, status) = integrate_partial(&v, &[1.0], &IntegratorConfig::rk4(0.01, 2.0), &[]);
        match status {
            Err(Error::BlowUp { t_last }) => assert!(t_last > 0.9 && t_last < 1.1),
            other => panic!("expected blow-up, got {other:?}"),
        }
        assert!(traj.states.iter().flatten().all(|c| c.is_finite()));
    }

    #[test]
    fn midpoint_reports_non_convergence() {
        // stiff enough that the fixed-point map is not a contraction
        let v = VectorField::new(1, |x| vec![-1e4 * x[0]]);
        let err = integrate(&v, &[1.0], &IntegratorConfig::midpoint(0.1, 1.0), &[]).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }), "{err:?}");
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::rk4(2.0, 1.0).validate().is_err());
        assert!(IntegratorConfig::rk4(0.0, 1.0).validate().is_err());
        assert!(IntegratorConfig::rk4(0.1, 1.0).record_every(0).validate().is_err());
        assert_eq!(IntegratorConfig::rk4(0.1, 1.0).steps(), 10);
        assert_eq!(IntegratorConfig::rk4(1e-3, PI).steps(), 3142);
    }
}
