//! Sample windows `[t, t + Δt]` and their integral and difference features.

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, ControlLaw, Environment, Trajectory};
use crate::par::{map_slice, ExecMode};
use crate::policies::{AdBehaviorPolicy, AdLaw, StationaryPolicy};
use crate::{IpiError, Result, Vector};

/// Quadrature rule for `∫ α^{τ-t} Z dτ` over a window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Trapezoid over every integrator substep, with the held action on
    /// both ends of each substep.
    #[default]
    Composite,
    /// Two-point rule `(Z(t) + α^{Δt} Z(t')) Δt / 2`.
    EndpointTrapezoid,
}

/// Behavior generating the data in a window.
#[derive(Clone, Debug)]
pub enum Behavior {
    /// AD policy started with `U_t = u`.
    Ad(AdBehaviorPolicy),
    /// Stationary behavior, e.g. the target policy itself or `μ ≡ 0`.
    Stationary(StationaryPolicy),
}

/// Initial condition of a window: a state and, for AD behaviors, an action.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowStart {
    pub x: Vector,
    pub u: Option<Vector>,
}

/// One simulated window.
#[derive(Clone, Debug)]
pub struct SampleWindow {
    pub start: WindowStart,
    pub traj: Trajectory,
    pub dt: f64,
}

impl SampleWindow {
    pub fn first_state(&self) -> &Vector {
        self.traj.first_state()
    }

    pub fn last_state(&self) -> &Vector {
        self.traj.last_state()
    }

    /// `I_α(Z) = ∫_t^{t'} α^{τ-t} Z(X_τ, U_τ) dτ`.
    pub fn integral<F>(&self, alpha: f64, quad: Quadrature, z: F) -> Result<Vector>
    where
        F: Fn(&Vector, &Vector) -> Vector,
    {
        let traj = &self.traj;
        if traj.len() < 2 {
            return Err(IpiError::InvalidArgument("degenerate window".into()));
        }
        let ln_a = alpha.ln();
        let t0 = traj.times[0];
        let weight = |k: usize| (ln_a * (traj.times[k] - t0)).exp();
        let checked = |k: usize, v: Vector| -> Result<Vector> {
            if v.iter().all(|c| c.is_finite()) {
                Ok(v)
            } else {
                Err(IpiError::NonFinite { index: k })
            }
        };
        match quad {
            Quadrature::EndpointTrapezoid => {
                let last = traj.len() - 1;
                let a = checked(0, z(&traj.states[0], &traj.actions[0]))?;
                let b = checked(last, z(&traj.states[last], &traj.actions[last]))?;
                Ok((a + b * weight(last)) * (0.5 * self.dt))
            }
            Quadrature::Composite => {
                let mut left = checked(0, z(&traj.states[0], &traj.actions[0]))?;
                let mut acc = Vector::zeros(left.len());
                for k in 0..traj.len() - 1 {
                    let h = traj.times[k + 1] - traj.times[k];
                    let u = &traj.actions[k];
                    let right = checked(k + 1, z(&traj.states[k + 1], u))? * weight(k + 1);
                    acc += (&left + &right) * (0.5 * h);
                    if k + 2 < traj.len() {
                        let next_u = &traj.actions[k + 1];
                        left = if next_u == u {
                            right
                        } else {
                            checked(k + 1, z(&traj.states[k + 1], next_u))? * weight(k + 1)
                        };
                    }
                }
                Ok(acc)
            }
        }
    }

    /// `D_α(v) = v(X_t) - α^{Δt} v(X_{t'})`.
    pub fn difference<F>(&self, alpha: f64, v: F) -> Vector
    where
        F: Fn(&Vector) -> Vector,
    {
        v(self.first_state()) - v(self.last_state()) * alpha.powf(self.dt)
    }
}

/// Simulates one window under `behavior` with substep `h`.
pub fn collect_window(env: &Environment, behavior: &Behavior, start: &WindowStart, dt: f64, h: f64) -> Result<SampleWindow> {
    if !(dt >= h && h > 0.0) {
        return Err(IpiError::InvalidArgument(format!("need Δt >= h > 0 (Δt {dt}, h {h})")));
    }
    let traj = match behavior {
        Behavior::Ad(policy) => {
            let u = start
                .u
                .clone()
                .ok_or_else(|| IpiError::Configuration("AD behavior needs an initial action".into()))?;
            let law = AdLaw { policy, u, t0: 0.0 };
            simulate(env, &law, &start.x, 0.0, dt, h)?
        }
        Behavior::Stationary(pi) => simulate(env, pi as &dyn ControlLaw, &start.x, 0.0, dt, h)?,
    };
    Ok(SampleWindow {
        start: start.clone(),
        traj,
        dt,
    })
}

/// Collects windows for every start, preserving order. Blown-up samples are
/// dropped and counted; other errors abort.
pub fn collect_windows(
    env: &Environment,
    behavior: &Behavior,
    starts: &[WindowStart],
    dt: f64,
    h: f64,
    mode: ExecMode,
) -> Result<(Vec<SampleWindow>, usize)> {
    let results = map_slice(mode, starts, |s| collect_window(env, behavior, s, dt, h));
    let mut windows = Vec::with_capacity(results.len());
    let mut dropped = 0;
    for r in results {
        match r {
            Ok(w) => windows.push(w),
            Err(IpiError::NumericalBlowup { .. }) | Err(IpiError::NonFinite { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} blown-up sample windows");
    }
    Ok((windows, dropped))
}
