//! Integral policy iteration (IPI) for reinforcement learning in continuous
//! time and space.
//!
//! The crate covers the on-policy scheme and its off-policy relatives (IAPI,
//! IQPI, IEPI, ICPI), the LQR specialization, RBF-network value heads fitted
//! by least squares on sampled Bellman windows, and an independent Riccati
//! oracle used to validate the LQR runs.
//!
//! Module map:
//!
//! - [`dynamics`]: ODE environments, RK4 stepping and trajectory simulation.
//! - [`rewards`]: `R(x,u) = R0(x) - S(u)`, the action penalty and `sigma`.
//! - [`policies`]: target policies and action-dependent behavior policies.
//! - [`funcapprox`]: RBF and polynomial feature bases, linear heads.
//! - [`rollout`]: window collection and integral/difference features.
//! - [`policyeval`]: unified least-squares Bellman systems.
//! - [`policyimp`]: VGB greedy, grid argmax, RUD, LQR gain.
//! - [`driver`]: the iteration loop and its diagnostics.
//! - [`lqr_oracle`]: Kleinman/Lyapunov ground truth.

pub mod driver;
pub mod dynamics;
pub mod error;
pub mod funcapprox;
pub mod lqr_oracle;
pub mod par;
pub mod policies;
pub mod policyeval;
pub mod policyimp;
pub mod rewards;
pub mod rollout;

pub use error::{IpiError, Result};
pub use par::ExecMode;

/// Column vector used for states, actions and parameter vectors.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
