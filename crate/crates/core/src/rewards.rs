//! Rewards `R(x,u) = R0(x) - S(u)` with action penalties built from a
//! monotone generator `s`, the greedy map `σ(ξ) = s(Γ⁻¹ξ)` and discounted
//! returns of sampled trajectories.

use std::fmt;
use std::sync::Arc;

use crate::dynamics::{ActionBox, Trajectory};
use crate::{IpiError, Matrix, Result, Vector};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// State part `R0` of the reward.
#[derive(Clone, Debug, PartialEq)]
pub enum StateReward {
    /// `gain * cos(x_1)`.
    Cosine { gain: f64 },
    /// `-|C x|^2`.
    NegQuadratic { c: Matrix },
    Constant(f64),
}

impl StateReward {
    pub fn eval(&self, x: &Vector) -> f64 {
        match self {
            StateReward::Cosine { gain } => gain * x[0].cos(),
            StateReward::NegQuadratic { c } => -(c * x).norm_squared(),
            StateReward::Constant(v) => *v,
        }
    }

    /// `sup_x R0(x)`.
    pub fn upper_bound(&self) -> f64 {
        match self {
            StateReward::Cosine { gain } => gain.abs(),
            StateReward::NegQuadratic { .. } => 0.0,
            StateReward::Constant(v) => *v,
        }
    }
}

/// Coordinate-wise generator `s: R -> (-U, U)` of the action penalty.
#[derive(Clone)]
pub enum PenaltyGenerator {
    /// `s(ξ) = U tanh(ξ / U)` per coordinate.
    Tanh { u_max: Vec<f64> },
    /// `s(ξ) = ξ / 2` on `m` unconstrained coordinates.
    HalfLinear { dim: usize },
    /// User-supplied odd, strictly increasing generator shared by all
    /// coordinates, with its inverse and derivative.
    Custom {
        dim: usize,
        limit: f64,
        s: ScalarFn,
        s_inv: ScalarFn,
        ds: ScalarFn,
    },
}

impl fmt::Debug for PenaltyGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyGenerator::Tanh { u_max } => f.debug_struct("Tanh").field("u_max", u_max).finish(),
            PenaltyGenerator::HalfLinear { dim } => f.debug_struct("HalfLinear").field("dim", dim).finish(),
            PenaltyGenerator::Custom { dim, limit, .. } => {
                f.debug_struct("Custom").field("dim", dim).field("limit", limit).finish()
            }
        }
    }
}

impl PenaltyGenerator {
    pub fn dim(&self) -> usize {
        match self {
            PenaltyGenerator::Tanh { u_max } => u_max.len(),
            PenaltyGenerator::HalfLinear { dim } | PenaltyGenerator::Custom { dim, .. } => *dim,
        }
    }

    fn limit(&self, i: usize) -> f64 {
        match self {
            PenaltyGenerator::Tanh { u_max } => u_max[i],
            PenaltyGenerator::HalfLinear { .. } => f64::INFINITY,
            PenaltyGenerator::Custom { limit, .. } => *limit,
        }
    }

    fn s(&self, i: usize, xi: f64) -> f64 {
        match self {
            PenaltyGenerator::Tanh { u_max } => u_max[i] * (xi / u_max[i]).tanh(),
            PenaltyGenerator::HalfLinear { .. } => 0.5 * xi,
            PenaltyGenerator::Custom { s, .. } => s(xi),
        }
    }

    fn ds(&self, i: usize, xi: f64) -> f64 {
        match self {
            PenaltyGenerator::Tanh { u_max } => {
                let c = (xi / u_max[i]).cosh();
                1.0 / (c * c)
            }
            PenaltyGenerator::HalfLinear { .. } => 0.5,
            PenaltyGenerator::Custom { ds, .. } => ds(xi),
        }
    }

    /// `s⁻¹(u)`; infinite on the boundary of a bounded coordinate.
    fn s_inv(&self, i: usize, u: f64) -> f64 {
        match self {
            PenaltyGenerator::Tanh { u_max } => u_max[i] * (u / u_max[i]).atanh(),
            PenaltyGenerator::HalfLinear { .. } => 2.0 * u,
            PenaltyGenerator::Custom { s_inv, .. } => s_inv(u),
        }
    }
}

/// Reward specification shared by every method.
#[derive(Clone, Debug)]
pub struct RewardSpec {
    pub state_reward: StateReward,
    pub generator: PenaltyGenerator,
    gamma_mat: Matrix,
    gamma_inv: Matrix,
    /// Discount factor `γ ∈ (0, 1]`.
    pub discount: f64,
    action_box: ActionBox,
}

impl RewardSpec {
    pub fn new(state_reward: StateReward, generator: PenaltyGenerator, gamma_mat: Matrix, discount: f64) -> Result<Self> {
        let m = generator.dim();
        if m == 0 || gamma_mat.shape() != (m, m) {
            return Err(IpiError::InvalidArgument(format!("Γ must be {m} x {m}")));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(IpiError::InvalidArgument(format!("discount factor must lie in (0, 1], got {discount}")));
        }
        if (&gamma_mat - gamma_mat.transpose()).amax() > 1e-12 * (1.0 + gamma_mat.amax()) {
            return Err(IpiError::InvalidArgument("Γ must be symmetric".into()));
        }
        let chol = gamma_mat
            .clone()
            .cholesky()
            .ok_or_else(|| IpiError::InvalidArgument("Γ must be positive definite".into()))?;
        if let PenaltyGenerator::Tanh { u_max } = &generator {
            if u_max.iter().any(|u| !u.is_finite() || *u <= 0.0) {
                return Err(IpiError::InvalidArgument("tanh generator needs finite positive bounds".into()));
            }
        }
        let limits: Vec<f64> = (0..m).map(|i| generator.limit(i)).collect();
        let action_box = ActionBox::symmetric(limits)?;
        let diagonal = (0..m).all(|i| (0..m).all(|j| i == j || gamma_mat[(i, j)] == 0.0));
        if !diagonal && !matches!(generator, PenaltyGenerator::HalfLinear { .. }) {
            // Γ·diag(s⁻¹') is not symmetric, so the penalty integral would depend on the path.
            return Err(IpiError::Configuration(
                "a nonlinear penalty generator needs a diagonal Γ".into(),
            ));
        }
        if discount == 1.0 {
            log::warn!("undiscounted reward: admissibility of the initial policy is not guaranteed");
        }
        Ok(Self {
            state_reward,
            generator,
            gamma_inv: chol.inverse(),
            gamma_mat,
            discount,
            action_box,
        })
    }

    /// Pendulum reward: `100 cos x_1 - S(u)` with the tanh generator.
    pub fn pendulum(u_max: f64, discount: f64) -> Result<Self> {
        Self::new(
            StateReward::Cosine { gain: 100.0 },
            PenaltyGenerator::Tanh { u_max: vec![u_max] },
            Matrix::identity(1, 1),
            discount,
        )
    }

    /// Quadratic reward `-|Cx|^2 - u'Γu`.
    pub fn lqr(c: Matrix, gamma_mat: Matrix, discount: f64) -> Result<Self> {
        let m = gamma_mat.nrows();
        Self::new(StateReward::NegQuadratic { c }, PenaltyGenerator::HalfLinear { dim: m }, gamma_mat, discount)
    }

    pub fn action_dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn gamma_mat(&self) -> &Matrix {
        &self.gamma_mat
    }

    pub fn gamma_inv(&self) -> &Matrix {
        &self.gamma_inv
    }

    pub fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    /// `ln γ`.
    pub fn ln_discount(&self) -> f64 {
        self.discount.ln()
    }

    fn check_action(&self, u: &Vector) -> Result<()> {
        if u.len() != self.action_dim() {
            return Err(IpiError::InvalidArgument(format!(
                "expected an action of dim {}, got {}",
                self.action_dim(),
                u.len()
            )));
        }
        if !self.action_box.contains(u) {
            return Err(IpiError::Domain(format!("action {:?} outside the action set", u.as_slice())));
        }
        Ok(())
    }

    /// `S(u)`, exact on the boundary of the action set.
    pub fn action_penalty(&self, u: &Vector) -> Result<f64> {
        self.check_action(u)?;
        match &self.generator {
            PenaltyGenerator::HalfLinear { .. } => Ok(u.dot(&(&self.gamma_mat * u))),
            PenaltyGenerator::Tanh { u_max } => Ok(u
                .iter()
                .zip(u_max)
                .enumerate()
                .map(|(i, (ui, um))| self.gamma_mat[(i, i)] * tanh_penalty(*ui, *um))
                .sum()),
            PenaltyGenerator::Custom { .. } => Ok(self.penalty_by_quadrature(u)),
        }
    }

    /// `S(u) = ∫₀¹ s⁻¹(t u)ᵀ Γ u dt` by tanh-sinh quadrature. The endpoint
    /// singularity on the boundary is integrable.
    pub fn penalty_by_quadrature(&self, u: &Vector) -> f64 {
        let gu = &self.gamma_mat * u;
        let integrand = |t: f64| -> f64 {
            (0..u.len())
                .map(|i| {
                    let w = self.generator.s_inv(i, t * u[i]);
                    if w.is_finite() {
                        w * gu[i]
                    } else {
                        0.0
                    }
                })
                .sum()
        };
        quadrature::double_exponential::integrate(integrand, 0.0, 1.0, 1e-10).integral
    }

    /// `∇S(u) = Γ s⁻¹(u)` on the interior.
    pub fn penalty_gradient(&self, u: &Vector) -> Result<Vector> {
        self.check_action(u)?;
        let inv = Vector::from_iterator(u.len(), (0..u.len()).map(|i| self.generator.s_inv(i, u[i])));
        Ok(&self.gamma_mat * inv)
    }

    /// `σ(ξ) = s(Γ⁻¹ ξ)`, always strictly inside the action set.
    pub fn sigma(&self, xi: &Vector) -> Vector {
        let z = &self.gamma_inv * xi;
        Vector::from_iterator(z.len(), z.iter().enumerate().map(|(i, zi)| self.generator.s(i, *zi)))
    }

    /// `∂σ/∂ξ = diag(s'(Γ⁻¹ξ)) Γ⁻¹`.
    pub fn sigma_jacobian(&self, xi: &Vector) -> Matrix {
        let z = &self.gamma_inv * xi;
        let mut j = self.gamma_inv.clone();
        for (i, zi) in z.iter().enumerate() {
            let d = self.generator.ds(i, *zi);
            j.row_mut(i).scale_mut(d);
        }
        j
    }

    pub fn state_reward(&self, x: &Vector) -> f64 {
        self.state_reward.eval(x)
    }

    pub fn reward(&self, x: &Vector, u: &Vector) -> Result<f64> {
        Ok(self.state_reward.eval(x) - self.action_penalty(u)?)
    }

    /// Trapezoidal `∫ γ^{τ-t0} R(X_τ, U_τ) dτ` over the trajectory span.
    pub fn return_estimate(&self, traj: &Trajectory) -> Result<f64> {
        if traj.is_empty() {
            return Err(IpiError::InvalidArgument("empty trajectory".into()));
        }
        let t0 = traj.times[0];
        let ln_g = self.ln_discount();
        let mut prev: Option<(f64, f64)> = None;
        let mut total = 0.0;
        for ((t, x), u) in traj.times.iter().zip(&traj.states).zip(&traj.actions) {
            let r = (ln_g * (t - t0)).exp() * self.reward(x, u)?;
            if let Some((tp, rp)) = prev {
                total += 0.5 * (t - tp) * (r + rp);
            }
            prev = Some((*t, r));
        }
        Ok(total)
    }
}

/// `∫₀^u U artanh(w/U) dw = (U²/2)(u₊ ln u₊ + u₋ ln u₋)`, `u± = 1 ± u/U`.
pub fn tanh_penalty(u: f64, u_max: f64) -> f64 {
    let xlnx = |v: f64| if v <= 0.0 { 0.0 } else { v * v.ln() };
    let r = u / u_max;
    0.5 * u_max * u_max * (xlnx(1.0 + r) + xlnx(1.0 - r))
}
