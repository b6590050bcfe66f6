//! ODE environments `x' = f_d(x) + f_c(x, u)` and fixed-step RK4 simulation.
//!
//! Actions are sample-and-hold: the control law is evaluated at the start of
//! every integrator substep and held over it. Trajectories keep every
//! substep so quadrature never has to re-integrate.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::Complex;

use crate::{IpiError, Matrix, Result, Vector};

type StateMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type CouplingFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
type CouplingMatrixFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// Symmetric box `[-U_max, U_max]^m`; a coordinate limit may be `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionBox {
    limits: Vec<f64>,
}

impl ActionBox {
    pub fn symmetric(limits: Vec<f64>) -> Result<Self> {
        if limits.is_empty() {
            return Err(IpiError::InvalidArgument("action box needs at least one coordinate".into()));
        }
        if let Some(bad) = limits.iter().find(|l| l.is_nan() || **l <= 0.0) {
            return Err(IpiError::InvalidArgument(format!("action limit must be positive, got {bad}")));
        }
        Ok(Self { limits })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            limits: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.limits.len()
    }

    pub fn limits(&self) -> &[f64] {
        &self.limits
    }

    /// True when every coordinate has a finite limit.
    pub fn is_bounded(&self) -> bool {
        self.limits.iter().all(|l| l.is_finite())
    }

    /// True when at least one coordinate is limited.
    pub fn is_partially_bounded(&self) -> bool {
        self.limits.iter().any(|l| l.is_finite())
    }

    pub fn contains(&self, u: &Vector) -> bool {
        u.len() == self.dim() && u.iter().zip(&self.limits).all(|(v, l)| v.is_finite() && v.abs() <= *l)
    }

    pub fn clamp(&self, u: &Vector) -> Vector {
        Vector::from_iterator(u.len(), u.iter().zip(&self.limits).map(|(v, l)| v.clamp(-l, *l)))
    }
}

/// Input coupling `f_c`: either general or affine `F_c(x) u`.
#[derive(Clone)]
pub enum Coupling {
    General(CouplingFn),
    Affine(CouplingMatrixFn),
}

/// Continuous-time environment with a drift/coupling decomposition.
///
/// Immutable after construction; cheap to clone and share across threads.
#[derive(Clone)]
pub struct Environment {
    name: String,
    state_dim: usize,
    action_dim: usize,
    action_box: ActionBox,
    drift: StateMap,
    coupling: Coupling,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("action_dim", &self.action_dim)
            .field("action_box", &self.action_box)
            .field("affine", &self.is_affine())
            .finish()
    }
}

impl Environment {
    pub fn new_affine<D, F>(
        name: impl Into<String>,
        state_dim: usize,
        action_box: ActionBox,
        drift: D,
        coupling_matrix: F,
    ) -> Result<Self>
    where
        D: Fn(&Vector) -> Vector + Send + Sync + 'static,
        F: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        Self::build(name.into(), state_dim, action_box, Arc::new(drift), Coupling::Affine(Arc::new(coupling_matrix)))
    }

    pub fn new_general<D, F>(
        name: impl Into<String>,
        state_dim: usize,
        action_box: ActionBox,
        drift: D,
        coupling: F,
    ) -> Result<Self>
    where
        D: Fn(&Vector) -> Vector + Send + Sync + 'static,
        F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    {
        Self::build(name.into(), state_dim, action_box, Arc::new(drift), Coupling::General(Arc::new(coupling)))
    }

    fn build(name: String, state_dim: usize, action_box: ActionBox, drift: StateMap, coupling: Coupling) -> Result<Self> {
        if state_dim == 0 {
            return Err(IpiError::InvalidArgument("state dimension must be positive".into()));
        }
        Ok(Self {
            name,
            state_dim,
            action_dim: action_box.dim(),
            action_box,
            drift,
            coupling,
        })
    }

    /// Torque-limited pendulum `θ'' = -0.01 θ' + 9.8 sin θ - u cos θ`,
    /// upright at `θ = 2πk`.
    pub fn pendulum(u_max: f64) -> Result<Self> {
        Self::new_affine(
            "pendulum",
            2,
            ActionBox::symmetric(vec![u_max])?,
            |x: &Vector| Vector::from_vec(vec![x[1], 9.8 * x[0].sin() - 0.01 * x[1]]),
            |x: &Vector| Matrix::from_column_slice(2, 1, &[0.0, -x[0].cos()]),
        )
    }

    /// Unconstrained linear environment `x' = A x + B u`.
    pub fn from_lqr(lqr: &LqrEnvironment) -> Result<Self> {
        let a = lqr.a.clone();
        let b = lqr.b.clone();
        Self::new_affine(
            "lqr",
            lqr.state_dim(),
            ActionBox::unbounded(lqr.action_dim()),
            move |x: &Vector| &a * x,
            move |_x: &Vector| b.clone(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.coupling, Coupling::Affine(_))
    }

    pub fn drift(&self, x: &Vector) -> Vector {
        (self.drift)(x)
    }

    pub fn coupling(&self, x: &Vector, u: &Vector) -> Vector {
        match &self.coupling {
            Coupling::General(fc) => fc(x, u),
            Coupling::Affine(fc) => fc(x) * u,
        }
    }

    /// `F_c(x)` for affine environments.
    pub fn coupling_matrix(&self, x: &Vector) -> Option<Matrix> {
        match &self.coupling {
            Coupling::Affine(fc) => Some(fc(x)),
            Coupling::General(_) => None,
        }
    }

    /// `f(x,u)` without argument checks.
    pub fn rhs(&self, x: &Vector, u: &Vector) -> Vector {
        self.drift(x) + self.coupling(x, u)
    }

    /// Checked evaluation of `f(x,u) = f_d(x) + f_c(x,u)`.
    pub fn eval_dynamics(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        self.check_dims(x, u)?;
        if !self.action_box.contains(u) {
            return Err(IpiError::Domain(format!("action {:?} outside the action set", u.as_slice())));
        }
        Ok(self.rhs(x, u))
    }

    fn check_dims(&self, x: &Vector, u: &Vector) -> Result<()> {
        if x.len() != self.state_dim || u.len() != self.action_dim {
            return Err(IpiError::InvalidArgument(format!(
                "expected state/action dims {}/{}, got {}/{}",
                self.state_dim,
                self.action_dim,
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }
}

/// Linear-quadratic problem data: `x' = Ax + Bu`, `R = -|Cx|^2 - u'Γu`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrEnvironment {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub gamma_mat: Matrix,
}

impl LqrEnvironment {
    /// Validates shapes, `Γ > 0`, stabilizability of `(A,B)` and
    /// detectability of `(A,C)` (PBH rank tests).
    pub fn new(a: Matrix, b: Matrix, c: Matrix, gamma_mat: Matrix) -> Result<Self> {
        let env = Self::new_unchecked(a, b, c, gamma_mat)?;
        if !env.is_stabilizable() {
            return Err(IpiError::InvalidArgument("(A, B) is not stabilizable".into()));
        }
        if !env.is_detectable() {
            return Err(IpiError::InvalidArgument("(A, C) is not detectable".into()));
        }
        Ok(env)
    }

    /// Shape and `Γ > 0` checks only; the caller vouches for
    /// stabilizability and detectability.
    pub fn new_unchecked(a: Matrix, b: Matrix, c: Matrix, gamma_mat: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(IpiError::InvalidArgument("A must be square and non-empty".into()));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(IpiError::InvalidArgument("B must be n x m".into()));
        }
        if c.ncols() != n {
            return Err(IpiError::InvalidArgument("C must be p x n".into()));
        }
        let m = b.ncols();
        if gamma_mat.shape() != (m, m) {
            return Err(IpiError::InvalidArgument("Γ must be m x m".into()));
        }
        if (&gamma_mat - gamma_mat.transpose()).abs().max() > 1e-12 * (1.0 + gamma_mat.abs().max()) {
            return Err(IpiError::InvalidArgument("Γ must be symmetric".into()));
        }
        if gamma_mat.clone().cholesky().is_none() {
            return Err(IpiError::InvalidArgument("Γ must be positive definite".into()));
        }
        Ok(Self { a, b, c, gamma_mat })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_stabilizable(&self) -> bool {
        pbh_full_rank(&self.a, &self.b, false)
    }

    pub fn is_detectable(&self) -> bool {
        pbh_full_rank(&self.a.transpose(), &self.c.transpose(), false)
    }
}

/// PBH test: `rank [A - λI, B] = n` for every eigenvalue with `Re λ >= 0`
/// (all eigenvalues when `all_modes`).
fn pbh_full_rank(a: &Matrix, b: &Matrix, all_modes: bool) -> bool {
    let n = a.nrows();
    let eigs = a.complex_eigenvalues();
    let ac: nalgebra::DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    let bc: nalgebra::DMatrix<Complex<f64>> = b.map(|v| Complex::new(v, 0.0));
    let scale = 1.0 + a.abs().max() + b.abs().max();
    eigs.iter().filter(|l| all_modes || l.re >= -1e-12).all(|lambda| {
        let mut pencil = nalgebra::DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        pencil.view_mut((0, 0), (n, n)).copy_from(&ac);
        for i in 0..n {
            pencil[(i, i)] -= *lambda;
        }
        pencil.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        let sv = pencil.singular_values();
        sv.iter().filter(|s| **s > 1e-9 * scale).count() == n
    })
}

/// Anything that produces an action from `(t, x)`.
pub trait ControlLaw: Sync {
    fn action(&self, t: f64, x: &Vector) -> Vector;

    /// Learned laws get clamped into the action box on round-off
    /// violations; user-supplied ones are rejected instead.
    fn is_learned(&self) -> bool {
        false
    }
}

/// Open-loop signal `t -> u(t)`.
pub struct OpenLoop<F>(pub F);

impl<F> ControlLaw for OpenLoop<F>
where
    F: Fn(f64) -> Vector + Sync,
{
    fn action(&self, t: f64, _x: &Vector) -> Vector {
        (self.0)(t)
    }
}

/// Sampled state/action path. `actions[k]` is held over `[times[k], times[k+1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub actions: Vec<Vector>,
    /// Substep length.
    pub step: f64,
    /// Number of learned actions that had to be clamped into the box.
    pub clamped: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first_state(&self) -> &Vector {
        &self.states[0]
    }

    pub fn last_state(&self) -> &Vector {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn span(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }
}

fn finite_or_blowup(v: Vector, time: f64) -> Result<Vector> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(IpiError::NumericalBlowup { time })
    }
}

/// One classical RK4 step with `u` held constant. Every stage is checked
/// for non-finite values; the error carries the stage time.
pub fn rk4_step(env: &Environment, t: f64, x: &Vector, u: &Vector, h: f64) -> Result<Vector> {
    if !(h > 0.0) {
        return Err(IpiError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let k1 = finite_or_blowup(env.rhs(x, u), t)?;
    let k2 = finite_or_blowup(env.rhs(&(x + &k1 * (0.5 * h)), u), t + 0.5 * h)?;
    let k3 = finite_or_blowup(env.rhs(&(x + &k2 * (0.5 * h)), u), t + 0.5 * h)?;
    let k4 = finite_or_blowup(env.rhs(&(x + &k3 * h), u), t + h)?;
    finite_or_blowup(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0), t + h)
}

/// Number of `h` steps in `horizon`, requiring `h` to divide it.
pub fn step_count(horizon: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(IpiError::InvalidArgument(format!("need horizon >= 0 and h > 0 (horizon {horizon}, h {h})")));
    }
    let n = (horizon / h).round();
    if (n * h - horizon).abs() > 1e-9 * horizon.max(h) {
        return Err(IpiError::InvalidArgument(format!("step {h} does not divide horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Simulates `x' = f(x, u)` from `x0` at `t0` for `horizon` seconds with
/// substep `h`. A zero horizon yields a single-point trajectory.
pub fn simulate(
    env: &Environment,
    law: &dyn ControlLaw,
    x0: &Vector,
    t0: f64,
    horizon: f64,
    h: f64,
) -> Result<Trajectory> {
    let steps = step_count(horizon, h)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps + 1);
    let mut clamped = 0;
    let mut x = x0.clone();
    for k in 0..=steps {
        let t = t0 + k as f64 * h;
        let raw = law.action(t, &x);
        env.check_dims(&x, &raw)?;
        let u = if env.action_box().contains(&raw) {
            raw
        } else if law.is_learned() && raw.iter().all(|v| v.is_finite()) {
            clamped += 1;
            env.action_box().clamp(&raw)
        } else {
            return Err(IpiError::Domain(format!("action {:?} at t = {t} outside the action set", raw.as_slice())));
        };
        let next = if k < steps { Some(rk4_step(env, t, &x, &u, h)?) } else { None };
        times.push(t);
        states.push(x);
        actions.push(u);
        match next {
            Some(n) => x = n,
            None => break,
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} learned actions clamped into the action box");
    }
    Ok(Trajectory {
        times,
        states,
        actions,
        step: h,
        clamped,
    })
}

/// Wraps an angle into `[-π, π]`, sending both `±π` to `+π`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        PI
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn scalar_decay() -> Environment {
        Environment::new_affine(
            "decay",
            1,
            ActionBox::unbounded(1),
            |x: &Vector| -x,
            |_x: &Vector| Matrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn pendulum_upright_equilibrium() {
        let env = Environment::pendulum(5.0).unwrap();
        let f = env.eval_dynamics(&v(&[PI, 0.0]), &v(&[0.0])).unwrap();
        assert!(f.norm() < 1e-12);
    }

    #[test]
    fn pendulum_horizontal() {
        let env = Environment::pendulum(5.0).unwrap();
        let f = env.eval_dynamics(&v(&[PI / 2.0, 1.0]), &v(&[0.0])).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!((f[1] - 9.79).abs() < 1e-12);
    }

    #[test]
    fn pendulum_coupling_at_zero_angle() {
        let env = Environment::pendulum(5.0).unwrap();
        let fc = env.coupling_matrix(&v(&[0.0, 3.0])).unwrap();
        assert_eq!(fc[(1, 0)], -1.0);
        let f = env.eval_dynamics(&v(&[0.0, 3.0]), &v(&[2.0])).unwrap();
        assert!((f[0] - 3.0).abs() < 1e-15);
        assert!((f[1] - (-0.03 - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_dynamics_rejects_bad_input() {
        let env = Environment::pendulum(5.0).unwrap();
        assert!(matches!(
            env.eval_dynamics(&v(&[0.0]), &v(&[0.0])),
            Err(IpiError::InvalidArgument(_))
        ));
        assert!(matches!(
            env.eval_dynamics(&v(&[0.0, 0.0]), &v(&[5.5])),
            Err(IpiError::Domain(_))
        ));
    }

    #[test]
    fn rk4_zero_dynamics_is_identity() {
        let env = Environment::new_affine(
            "zero",
            3,
            ActionBox::unbounded(1),
            |x: &Vector| Vector::zeros(x.len()),
            |_x: &Vector| Matrix::zeros(3, 1),
        )
        .unwrap();
        let x = v(&[1.0, -2.0, 3.5]);
        assert_eq!(rk4_step(&env, 0.0, &x, &v(&[0.0]), 0.1).unwrap(), x);
    }

    #[test]
    fn rk4_scalar_decay_matches_exponential() {
        let x1 = rk4_step(&scalar_decay(), 0.0, &v(&[1.0]), &v(&[0.0]), 0.001).unwrap();
        assert!((x1[0] - (-0.001f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rk4_pendulum_matches_fine_reference() {
        let env = Environment::pendulum(5.0).unwrap();
        let x0 = v(&[1.1 * PI, 0.0]);
        let u = v(&[0.0]);
        let coarse = rk4_step(&env, 0.0, &x0, &u, 1e-3).unwrap();
        let mut fine = x0.clone();
        for k in 0..100 {
            fine = rk4_step(&env, k as f64 * 1e-5, &fine, &u, 1e-5).unwrap();
        }
        assert!((coarse - fine).amax() < 1e-8);
    }

    #[test]
    fn rk4_reports_blowup_time() {
        let env = Environment::new_affine(
            "blowup",
            1,
            ActionBox::unbounded(1),
            |x: &Vector| x.map(|c| c * c * 1e200),
            |_x: &Vector| Matrix::zeros(1, 1),
        )
        .unwrap();
        let err = rk4_step(&env, 2.0, &v(&[1e200]), &v(&[0.0]), 0.1).unwrap_err();
        assert!(matches!(err, IpiError::NumericalBlowup { time } if (2.0..=2.1).contains(&time)));
    }

    #[test]
    fn simulate_counts_samples() {
        let env = Environment::pendulum(5.0).unwrap();
        let zero = OpenLoop(|_t: f64| v(&[0.0]));
        let traj = simulate(&env, &zero, &v(&[0.0, 0.0]), 0.0, 0.01, 0.001).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.actions.len(), 11);
        for w in traj.times.windows(2) {
            let d = w[1] - w[0];
            assert!((d - 0.001).abs() <= f64::EPSILON * w[1].abs().max(1.0));
        }
    }

    #[test]
    fn simulate_zero_horizon_is_single_point() {
        let env = Environment::pendulum(5.0).unwrap();
        let zero = OpenLoop(|_t: f64| v(&[0.0]));
        let traj = simulate(&env, &zero, &v(&[1.0, 0.0]), 0.0, 0.0, 0.001).unwrap();
        assert_eq!(traj.len(), 1);
    }

    struct Gain(f64);
    impl ControlLaw for Gain {
        fn action(&self, _t: f64, x: &Vector) -> Vector {
            x * self.0
        }
    }

    #[test]
    fn simulate_linear_closed_loop_sample_and_hold() {
        // x' = x + u with u = -2 x_k held over each step: x_{k+1} = (2 - e^h) x_k.
        let lqr = LqrEnvironment::new(
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::identity(1, 1),
        )
        .unwrap();
        let env = Environment::from_lqr(&lqr).unwrap();
        let h = 1e-3;
        let traj = simulate(&env, &Gain(-2.0), &v(&[1.0]), 0.0, 1.0, h).unwrap();
        let exact = (2.0 - h.exp()).powi(1000);
        assert!((traj.last_state()[0] - exact).abs() < 1e-9);
        // The held loop tracks the continuous one e^{-t} to O(h).
        assert!((traj.last_state()[0] - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn simulate_rejects_user_actions_outside_box() {
        let env = Environment::pendulum(5.0).unwrap();
        let big = OpenLoop(|_t: f64| v(&[6.0]));
        assert!(matches!(
            simulate(&env, &big, &v(&[0.0, 0.0]), 0.0, 0.01, 0.001),
            Err(IpiError::Domain(_))
        ));
    }

    #[test]
    fn pendulum_energy_balance() {
        // E = θ'^2/2 + 9.8 cos θ satisfies dE/dt = -0.01 θ'^2 under u = 0.
        let env = Environment::pendulum(5.0).unwrap();
        let zero = OpenLoop(|_t: f64| v(&[0.0]));
        let h = 1e-3;
        let traj = simulate(&env, &zero, &v(&[PI / 2.0, 0.0]), 0.0, 2.0, h).unwrap();
        let energy = |x: &Vector| 0.5 * x[1] * x[1] + 9.8 * x[0].cos();
        let mut dissipated = 0.0;
        for k in 0..traj.len() - 1 {
            let a = traj.states[k][1];
            let b = traj.states[k + 1][1];
            dissipated += 0.5 * h * 0.01 * (a * a + b * b);
            let lhs = energy(&traj.states[k + 1]) - energy(&traj.states[0]);
            assert!((lhs + dissipated).abs() < 1e-6, "k = {k}: {lhs} vs {}", -dissipated);
        }
    }

    #[test]
    fn rk4_global_order() {
        let env = Environment::pendulum(5.0).unwrap();
        let x0 = v(&[1.1 * PI, 0.5]);
        let zero = OpenLoop(|_t: f64| v(&[0.0]));
        let reference = simulate(&env, &zero, &x0, 0.0, 1.0, 1e-5).unwrap();
        let err = |h: f64| {
            let t = simulate(&env, &zero, &x0, 0.0, 1.0, h).unwrap();
            (t.last_state() - reference.last_state()).amax()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn decomposition_is_exact() {
        let env = Environment::pendulum(5.0).unwrap();
        for k in 0..50 {
            let x = v(&[k as f64 * 0.37 - 9.0, (k as f64 * 0.91).sin() * 6.0]);
            let u = v(&[(k as f64 * 1.3).cos() * 5.0]);
            let f = env.eval_dynamics(&x, &u).unwrap();
            assert_eq!(f, env.drift(&x) + env.coupling(&x, &u));
        }
    }

    #[test]
    fn drift_calls_are_observable() {
        static CALLS: AtomicUsize = AtomicUsize::new(0);
        let env = Environment::new_affine(
            "counted",
            1,
            ActionBox::unbounded(1),
            |x: &Vector| {
                CALLS.fetch_add(1, Ordering::SeqCst);
                x.clone()
            },
            |_x: &Vector| Matrix::identity(1, 1),
        )
        .unwrap();
        let _ = env.coupling(&v(&[1.0]), &v(&[1.0]));
        assert_eq!(CALLS.load(Ordering::SeqCst), 0);
        let _ = env.rhs(&v(&[1.0]), &v(&[1.0]));
        assert_eq!(CALLS.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn lqr_rank_tests() {
        let ok = LqrEnvironment::new(
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::identity(1, 1),
        );
        assert!(ok.is_ok());
        // Unstable, uncontrollable mode.
        let bad = LqrEnvironment::new(
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
            Matrix::identity(2, 2),
            Matrix::identity(1, 1),
        );
        assert!(bad.is_err());
        // Stable uncontrollable mode is still stabilizable.
        let stable = LqrEnvironment::new(
            Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
            Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
            Matrix::identity(2, 2),
            Matrix::identity(1, 1),
        );
        assert!(stable.is_ok());
        let not_pd = LqrEnvironment::new_unchecked(
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, -1.0),
        );
        assert!(not_pd.is_err());
    }

    #[test]
    fn wrap_angle_tie_break() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(1.1 * PI) + 0.9 * PI).abs() < 1e-12);
        assert_eq!(wrap_angle(0.5), 0.5);
    }
}
