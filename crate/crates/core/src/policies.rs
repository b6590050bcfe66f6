//! Stationary target policies and action-dependent (AD) behavior policies.

use std::sync::Arc;

use crate::dynamics::{ControlLaw, Environment};
use crate::funcapprox::Net;
use crate::rewards::RewardSpec;
use crate::{IpiError, Matrix, Result, Vector};

/// Target policy `π: X -> U`.
#[derive(Clone, Debug)]
pub enum StationaryPolicy {
    Constant(Vector),
    /// `π(x) = K x`.
    Linear(Matrix),
    /// `π(x) = σ(F_cᵀ(x) ∇vᵀ(x))` for a scalar value net `v`.
    Vgb {
        env: Environment,
        reward: Arc<RewardSpec>,
        value: Net,
    },
    /// `π(x) = σ(y(x̄))` for a head `y` with `m` outputs; covers both the
    /// RUD-trained policy net and the C-function greedy policy.
    Network { head: Net, reward: Arc<RewardSpec> },
}

impl StationaryPolicy {
    pub fn zero(m: usize) -> Self {
        StationaryPolicy::Constant(Vector::zeros(m))
    }

    pub fn vgb(env: Environment, reward: Arc<RewardSpec>, value: Net) -> Result<Self> {
        if !env.is_affine() {
            return Err(IpiError::Configuration("VGB greedy policy needs input-affine dynamics".into()));
        }
        if value.output_dim() != 1 || value.input_dim() != env.state_dim() {
            return Err(IpiError::InvalidArgument("VGB value net must map states to scalars".into()));
        }
        if reward.action_dim() != env.action_dim() {
            return Err(IpiError::InvalidArgument("reward and environment action dims differ".into()));
        }
        Ok(StationaryPolicy::Vgb { env, reward, value })
    }

    pub fn network(head: Net, reward: Arc<RewardSpec>) -> Result<Self> {
        if head.output_dim() != reward.action_dim() {
            return Err(IpiError::InvalidArgument(format!(
                "policy head must have {} outputs, got {}",
                reward.action_dim(),
                head.output_dim()
            )));
        }
        Ok(StationaryPolicy::Network { head, reward })
    }

    pub fn action_dim(&self) -> usize {
        match self {
            StationaryPolicy::Constant(c) => c.len(),
            StationaryPolicy::Linear(k) => k.nrows(),
            StationaryPolicy::Vgb { env, .. } => env.action_dim(),
            StationaryPolicy::Network { head, .. } => head.output_dim(),
        }
    }

    /// `π(x)`; learned kinds are clamped into the action box.
    pub fn eval(&self, x: &Vector) -> Vector {
        match self {
            StationaryPolicy::Constant(c) => c.clone(),
            StationaryPolicy::Linear(k) => k * x,
            StationaryPolicy::Vgb { env, reward, value } => {
                let grad = value.gradient(x).expect("value net input dimension");
                let fc = env.coupling_matrix(x).expect("affine environment");
                let xi = fc.transpose() * grad.transpose();
                reward.action_box().clamp(&reward.sigma(&xi.column(0).into_owned()))
            }
            StationaryPolicy::Network { head, reward } => {
                let xi = head.eval(x).expect("policy head input dimension");
                reward.action_box().clamp(&reward.sigma(&xi))
            }
        }
    }

    pub fn is_learned(&self) -> bool {
        !matches!(self, StationaryPolicy::Constant(_))
    }
}

impl ControlLaw for StationaryPolicy {
    fn action(&self, _t: f64, x: &Vector) -> Vector {
        self.eval(x)
    }

    fn is_learned(&self) -> bool {
        StationaryPolicy::is_learned(self)
    }
}

/// AD behavior policy `μ(τ, x, u)` with `μ(t, x, u) = u`.
#[derive(Clone, Debug)]
pub enum AdBehaviorPolicy {
    /// `μ(τ, x, u) = u`.
    ConstantHold,
    /// `π(x) + (u - π(x)) e^{-decay (τ - t)} + Σ_j A_j sin(ω_j (τ - t))`.
    Probing {
        base: StationaryPolicy,
        decay: f64,
        amplitudes: Vec<Vector>,
        freqs: Vec<f64>,
    },
}

impl AdBehaviorPolicy {
    /// Probing signal with unit decay and no sinusoids.
    pub fn probing(base: StationaryPolicy, action_box_bounded: bool) -> Result<Self> {
        Self::probing_with(base, 1.0, Vec::new(), Vec::new(), action_box_bounded)
    }

    pub fn probing_with(
        base: StationaryPolicy,
        decay: f64,
        amplitudes: Vec<Vector>,
        freqs: Vec<f64>,
        action_box_bounded: bool,
    ) -> Result<Self> {
        if action_box_bounded {
            return Err(IpiError::Configuration("probing behavior needs an unbounded action set".into()));
        }
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(IpiError::InvalidArgument(format!("decay rate must be positive, got {decay}")));
        }
        if amplitudes.len() != freqs.len() {
            return Err(IpiError::InvalidArgument("one frequency per amplitude".into()));
        }
        if amplitudes.iter().any(|a| a.len() != base.action_dim()) {
            return Err(IpiError::InvalidArgument("amplitude dimension must match the action".into()));
        }
        Ok(AdBehaviorPolicy::Probing {
            base,
            decay,
            amplitudes,
            freqs,
        })
    }

    pub fn eval_behavior(&self, tau: f64, x: &Vector, u: &Vector, t0: f64) -> Result<Vector> {
        if tau < t0 {
            return Err(IpiError::InvalidArgument(format!("behavior queried at {tau} before its start {t0}")));
        }
        Ok(self.eval_unchecked(tau - t0, x, u))
    }

    pub(crate) fn eval_unchecked(&self, elapsed: f64, x: &Vector, u: &Vector) -> Vector {
        match self {
            AdBehaviorPolicy::ConstantHold => u.clone(),
            AdBehaviorPolicy::Probing {
                base,
                decay,
                amplitudes,
                freqs,
            } => {
                if elapsed == 0.0 {
                    return u.clone();
                }
                let p = base.eval(x);
                let mut out = &p + (u - &p) * (-decay * elapsed).exp();
                for (a, w) in amplitudes.iter().zip(freqs) {
                    out += a * (w * elapsed).sin();
                }
                out
            }
        }
    }
}

/// `τ ↦ μ(τ, X_τ, u)` started at `t0`, as a control law.
pub struct AdLaw<'a> {
    pub policy: &'a AdBehaviorPolicy,
    pub u: Vector,
    pub t0: f64,
}

impl ControlLaw for AdLaw<'_> {
    fn action(&self, t: f64, x: &Vector) -> Vector {
        self.policy.eval_unchecked((t - self.t0).max(0.0), x, &self.u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::{Basis, GridSpec, RbfBasis};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn pendulum_parts() -> (Environment, Arc<RewardSpec>) {
        (
            Environment::pendulum(5.0).unwrap(),
            Arc::new(RewardSpec::pendulum(5.0, 0.1).unwrap()),
        )
    }

    fn rbf(n: usize) -> Arc<Basis> {
        Arc::new(Basis::Rbf(
            RbfBasis::on_grid(&GridSpec::pendulum_states(n).unwrap(), vec![1.0, 0.5], true).unwrap(),
        ))
    }

    #[test]
    fn simple_policy_values() {
        assert_eq!(StationaryPolicy::zero(1).eval(&v(&[3.0, 1.0])), v(&[0.0]));
        let lin = StationaryPolicy::Linear(Matrix::from_element(1, 1, -1.0));
        assert_eq!(lin.eval(&v(&[2.0])), v(&[-2.0]));
    }

    #[test]
    fn vgb_with_zero_gradient_is_zero() {
        let (env, reward) = pendulum_parts();
        let pi = StationaryPolicy::vgb(env, reward, Net::zeros(rbf(5), 1)).unwrap();
        assert_eq!(pi.eval(&v(&[1.0, 2.0])), v(&[0.0]));
    }

    #[test]
    fn vgb_matches_hand_computation() {
        let (env, reward) = pendulum_parts();
        let basis = rbf(5);
        let w = Matrix::from_fn(1, basis.len(), |_, j| (j as f64 * 0.3).sin() * 20.0);
        let value = Net::new(basis, w).unwrap();
        let x = v(&[0.4, -1.0]);
        let g = value.gradient(&x).unwrap();
        let xi = -0.4f64.cos() * g[(0, 1)];
        let pi = StationaryPolicy::vgb(env, reward, value).unwrap();
        assert!((pi.eval(&x)[0] - 5.0 * (xi / 5.0).tanh()).abs() < 1e-12);
    }

    #[test]
    fn behavior_examples() {
        let u = v(&[1.0]);
        let x = v(&[0.0]);
        let hold = AdBehaviorPolicy::ConstantHold;
        assert_eq!(hold.eval_behavior(0.0, &x, &u, 0.0).unwrap(), u);
        assert_eq!(hold.eval_behavior(5.0, &x, &u, 0.0).unwrap(), u);
        let probe = AdBehaviorPolicy::probing(StationaryPolicy::zero(1), false).unwrap();
        assert_eq!(probe.eval_behavior(3.0, &x, &u, 3.0).unwrap(), u);
        let half = probe.eval_behavior(2f64.ln(), &x, &u, 0.0).unwrap();
        assert!((half[0] - 0.5).abs() < 1e-15);
        assert!(matches!(hold.eval_behavior(-1.0, &x, &u, 0.0), Err(IpiError::InvalidArgument(_))));
    }

    #[test]
    fn probing_rejected_on_bounded_box() {
        assert!(matches!(
            AdBehaviorPolicy::probing(StationaryPolicy::zero(1), true),
            Err(IpiError::Configuration(_))
        ));
    }

    proptest! {
        #[test]
        fn ad_policies_start_at_u(t0 in -5.0..5.0f64, u in -10.0..10.0f64, x in -3.0..3.0f64, w in 0.1..10.0f64) {
            let base = StationaryPolicy::Linear(Matrix::from_element(1, 1, -0.7));
            let probe = AdBehaviorPolicy::probing_with(base, 2.0, vec![v(&[0.3])], vec![w], false).unwrap();
            for mu in [AdBehaviorPolicy::ConstantHold, probe] {
                prop_assert_eq!(mu.eval_behavior(t0, &v(&[x]), &v(&[u]), t0).unwrap(), v(&[u]));
            }
        }

        #[test]
        fn probing_on_policy_reduces_to_base(x in -3.0..3.0f64, dt in 0.0..4.0f64) {
            let base = StationaryPolicy::Linear(Matrix::from_element(1, 1, -0.7));
            let probe = AdBehaviorPolicy::probing(base.clone(), false).unwrap();
            let xv = v(&[x]);
            let u = base.eval(&xv);
            let out = probe.eval_behavior(dt, &xv, &u, 0.0).unwrap();
            prop_assert!((out - base.eval(&xv)).amax() < 1e-12);
        }
    }

    #[test]
    fn learned_policies_stay_in_box() {
        let (env, reward) = pendulum_parts();
        let basis = rbf(6);
        let w = Matrix::from_fn(1, basis.len(), |_, j| ((j * 13) as f64).sin() * 1e4);
        let vgb = StationaryPolicy::vgb(env, reward.clone(), Net::new(basis.clone(), w.clone()).unwrap()).unwrap();
        let net = StationaryPolicy::network(Net::new(basis, w).unwrap(), reward.clone()).unwrap();
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10_000 {
            let x = v(&[(next() - 0.5) * 20.0, (next() - 0.5) * 16.0]);
            for pi in [&vgb, &net] {
                assert!(reward.action_box().contains(&pi.eval(&x)));
            }
        }
    }
}
