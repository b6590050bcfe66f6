//! The iteration loop: evaluate `π_i`, improve to `π_{i+1}`, repeat until the
//! parameters settle or the iteration budget runs out. Also hosts the
//! admissibility heuristic, the monotonicity report and the boundary
//! diagnostic `l_π(x, k; v)`.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, Environment, LqrEnvironment};
use crate::funcapprox::{quadratic_weights_to_sym, Basis, GridSpec, Net, RbfBasis};
use crate::lqr_oracle::{spectral_abscissa, stabilizing_gain, z_transform};
use crate::par::{map_slice, ExecMode};
use crate::policies::{AdBehaviorPolicy, StationaryPolicy};
use crate::policyeval::{evaluate, EvalMethod, EvalOptions, Evaluation, FeatureSet, IqpiGains, MethodKind, ResidualStats, Ridge};
use crate::policyimp::{
    cfun_linear_gain, lqr_gain, policy_head_gradient, quadratic_head_gain, rud_optimize, ImprovementObjective, RudConfig,
};
use crate::rewards::{PenaltyGenerator, RewardSpec, StateReward};
use crate::rollout::{Behavior, Quadrature, WindowStart};
use crate::{IpiError, Matrix, Result, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    /// Torque-limited inverted pendulum.
    Pendulum {
        #[serde(default = "default_u_max")]
        u_max: f64,
    },
    /// `x' = Ax + Bu` with reward `-|Cx|² - uᵀΓu`.
    Lqr {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        #[serde(default)]
        gamma_mat: Option<Vec<Vec<f64>>>,
    },
}

fn default_u_max() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// `γ ∈ (0, 1]`.
    pub discount: f64,
    /// Gain of the pendulum's `cos θ` state reward.
    #[serde(default)]
    pub state_gain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    OnPolicy,
    Iepi,
    Iapi {
        #[serde(default = "one")]
        constraint_weight: f64,
    },
    Iqpi {
        #[serde(default = "one")]
        beta: f64,
        /// `[κ1, κ2]`; omitted means `κ1 = κ2 = ln(β/γ)`.
        #[serde(default)]
        kappa: Option<[f64; 2]>,
        #[serde(default)]
        table_literal: bool,
    },
    Icpi {
        /// Probe actions `u_0, …, u_m`; defaults to the box corners.
        #[serde(default)]
        probes: Option<Vec<Vec<f64>>>,
    },
    /// On-policy IPI with exact quadratic features (LQR only).
    Lqr,
}

fn one() -> f64 {
    1.0
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::OnPolicy => "onpolicy",
            MethodConfig::Iepi => "iepi",
            MethodConfig::Iapi { .. } => "iapi",
            MethodConfig::Iqpi { .. } => "iqpi",
            MethodConfig::Icpi { .. } => "icpi",
            MethodConfig::Lqr => "lqr",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Window length `Δt`.
    pub dt: Option<f64>,
    /// RK4 substep; defaults to `Δt/10` (pendulum) or `1e-5` (LQR).
    pub substep: Option<f64>,
    /// Counts of the start-state grid.
    pub states: Option<Vec<usize>>,
    /// Counts of the start state-action grid (IAPI, IQPI).
    pub state_actions: Option<Vec<usize>>,
    /// Counts of the state grid for IAPI constraints and RUD.
    pub grid: Option<Vec<usize>>,
    /// Half-width of the LQR sampling box.
    pub range: Option<f64>,
    pub quadrature: Quadrature,
    /// Uniform start jitter as a fraction of one grid cell; 0 disables.
    pub jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbfConfig {
    pub value: Vec<usize>,
    pub ad: Vec<usize>,
    pub sigma_value: Vec<f64>,
    pub sigma_ad: Vec<f64>,
}

impl Default for RbfConfig {
    fn default() -> Self {
        Self {
            value: vec![13, 13],
            ad: vec![9, 9, 9],
            sigma_value: vec![1.0, 0.5],
            sigma_ad: vec![1.0, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorKind {
    /// `μ = π_i` (on-policy).
    Target,
    /// `μ = 0`.
    Zero,
    /// `μ(τ, x, u) = u`.
    Hold,
    /// Decays from `u` toward `π_i(x)`; unbounded action sets only.
    Probing {
        #[serde(default = "one")]
        decay: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of improvement steps; policies `π_0, …, π_max_iter` are
    /// evaluated unless the run converges first.
    pub max_iter: usize,
    /// Threshold on `|θ_i - θ_{i-1}| / (1 + |θ_{i-1}|)`; defaults to 1e-6
    /// (LQR) or 1e-3.
    pub tolerance: Option<f64>,
    /// `K_0` for LQR runs; defaults to a pole-shifting stabilizer.
    pub initial_gain: Option<Vec<Vec<f64>>>,
    pub behavior: Option<BehaviorKind>,
    pub ridge: Option<Ridge>,
    pub mode: ExecMode,
    pub seed: u64,
    pub rud: RudConfig,
    /// Counts of the value-sample grid kept per iteration.
    pub diagnostic_grid: Option<Vec<usize>>,
    pub check_admissibility: bool,
    /// Flips the sign of the LQR gain update; used by the verification
    /// suite to confirm it catches a broken improvement step.
    #[serde(skip)]
    pub gain_sign_bug: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iter: 10,
            tolerance: None,
            initial_gain: None,
            behavior: None,
            ridge: None,
            mode: ExecMode::default(),
            seed: 0,
            rud: RudConfig::default(),
            diagnostic_grid: None,
            check_admissibility: true,
            gain_sign_bug: false,
        }
    }
}

/// Full description of one IPI experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpiConfig {
    pub environment: EnvironmentConfig,
    pub reward: RewardConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub rbf: RbfConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl IpiConfig {
    /// Scalar LQR `A = B = C = Γ = 1`, `γ = e⁻²`, `K_0 = -0.5`.
    pub fn lqr_scalar(method: MethodConfig) -> Self {
        Self {
            environment: EnvironmentConfig::Lqr {
                a: vec![vec![1.0]],
                b: vec![vec![1.0]],
                c: vec![vec![1.0]],
                gamma_mat: None,
            },
            reward: RewardConfig {
                discount: (-2.0f64).exp(),
                state_gain: None,
            },
            method,
            sampling: SamplingConfig::default(),
            rbf: RbfConfig::default(),
            run: RunConfig {
                initial_gain: Some(vec![vec![-0.5]]),
                ..RunConfig::default()
            },
        }
    }

    /// Pendulum with `γ = 0.1`, `Δt = 10 ms`, `U_max = 5`.
    pub fn pendulum_desk(method: MethodConfig) -> Self {
        Self {
            environment: EnvironmentConfig::Pendulum { u_max: 5.0 },
            reward: RewardConfig {
                discount: 0.1,
                state_gain: None,
            },
            method,
            sampling: SamplingConfig::default(),
            rbf: RbfConfig::default(),
            run: RunConfig::default(),
        }
    }

    pub fn build(&self) -> Result<Problem> {
        Problem::new(self)
    }

    pub fn tolerance(&self) -> f64 {
        self.run.tolerance.unwrap_or(match self.environment {
            EnvironmentConfig::Lqr { .. } => 1e-6,
            EnvironmentConfig::Pendulum { .. } => 1e-3,
        })
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(IpiError::Configuration(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Resolved runtime pieces of an [`IpiConfig`].
#[derive(Clone, Debug)]
pub struct Problem {
    pub env: Environment,
    pub lqr: Option<LqrEnvironment>,
    pub reward: Arc<RewardSpec>,
    pub method: EvalMethod,
    pub features: FeatureSet,
    /// State basis of the RUD-trained policy head.
    pub policy_basis: Arc<Basis>,
    pub starts: Vec<WindowStart>,
    pub constraint_states: Vec<Vector>,
    pub improvement_grid: Vec<Vector>,
    pub diagnostic_grid: GridSpec,
    pub initial_policy: StationaryPolicy,
    pub behavior: BehaviorKind,
    pub opts: EvalOptions,
    pub rud: RudConfig,
    pub tolerance: f64,
    pub max_iter: usize,
    pub check_admissibility: bool,
    pub gain_sign_bug: bool,
}

impl Problem {
    pub fn new(cfg: &IpiConfig) -> Result<Self> {
        let gamma = cfg.reward.discount;
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(IpiError::Configuration(format!("discount must lie in (0, 1], got {gamma}")));
        }
        let (env, lqr, reward) = match &cfg.environment {
            EnvironmentConfig::Pendulum { u_max } => {
                let env = Environment::pendulum(*u_max)?;
                let reward = RewardSpec::new(
                    StateReward::Cosine {
                        gain: cfg.reward.state_gain.unwrap_or(100.0),
                    },
                    PenaltyGenerator::Tanh { u_max: vec![*u_max] },
                    Matrix::identity(1, 1),
                    gamma,
                )?;
                (env, None, reward)
            }
            EnvironmentConfig::Lqr { a, b, c, gamma_mat } => {
                if cfg.reward.state_gain.is_some() {
                    return Err(IpiError::Configuration("state_gain applies to the pendulum only".into()));
                }
                let b = matrix(b, "b")?;
                let g = match gamma_mat {
                    Some(g) => matrix(g, "gamma_mat")?,
                    None => Matrix::identity(b.ncols(), b.ncols()),
                };
                let lqr = LqrEnvironment::new(matrix(a, "a")?, b, matrix(c, "c")?, g)?;
                let reward = RewardSpec::lqr(lqr.c.clone(), lqr.gamma_mat.clone(), gamma)?;
                (Environment::from_lqr(&lqr)?, Some(lqr), reward)
            }
        };
        let n = env.state_dim();
        let m = env.action_dim();
        let is_lqr = lqr.is_some();
        let s = &cfg.sampling;
        let range = s.range.unwrap_or(1.0);
        if !(range > 0.0) {
            return Err(IpiError::Configuration("sampling range must be positive".into()));
        }
        let state_ranges: Vec<(f64, f64)> = if is_lqr {
            vec![(-range, range); n]
        } else {
            vec![(-PI, PI), (-6.0, 6.0)]
        };
        let action_limits: Vec<f64> = if is_lqr {
            vec![range; m]
        } else {
            env.action_box().limits().to_vec()
        };
        let action_ranges: Vec<(f64, f64)> = action_limits.iter().map(|l| (-l, *l)).collect();

        let kind = match &cfg.method {
            MethodConfig::OnPolicy => MethodKind::OnPolicy,
            MethodConfig::Iepi => MethodKind::Iepi,
            MethodConfig::Lqr if is_lqr => MethodKind::Lqr,
            MethodConfig::Lqr => return Err(IpiError::Configuration("method lqr needs an lqr environment".into())),
            MethodConfig::Iapi { constraint_weight } => MethodKind::Iapi {
                constraint_weight: *constraint_weight,
            },
            MethodConfig::Iqpi {
                beta,
                kappa,
                table_literal,
            } => MethodKind::Iqpi {
                beta: *beta,
                gains: match kappa {
                    None => IqpiGains::Simplified,
                    Some([k1, k2]) => IqpiGains::General { k1: *k1, k2: *k2 },
                },
                table_literal: *table_literal,
            },
            MethodConfig::Icpi { probes } => MethodKind::Icpi {
                probes: match probes {
                    Some(p) => p.iter().map(|u| Vector::from_column_slice(u)).collect(),
                    None => corner_probes(&action_limits),
                },
            },
        };
        let method = EvalMethod::new(kind, gamma).map_err(|e| IpiError::Configuration(e.to_string()))?;
        if let MethodKind::Icpi { probes } = &method.kind {
            if let Some(p) = probes.iter().find(|p| p.len() != m || !env.action_box().contains(p)) {
                return Err(IpiError::Configuration(format!("ICPI probe {:?} is not an admissible action", p.as_slice())));
            }
        }

        let rbf = &cfg.rbf;
        let (features, policy_basis) = if is_lqr {
            let value = Arc::new(Basis::Quadratic { dim: n });
            (
                FeatureSet {
                    value: Some(value.clone()),
                    ad: Some(Arc::new(Basis::Quadratic { dim: n + m })),
                    cfun: Some(Arc::new(Basis::Linear { dim: n })),
                },
                Arc::new(Basis::Linear { dim: n }),
            )
        } else {
            if rbf.value.len() != n || rbf.sigma_value.len() != n || rbf.ad.len() != n + m || rbf.sigma_ad.len() != n + m {
                return Err(IpiError::Configuration("RBF grid and width dimensions do not match the environment".into()));
            }
            let value = Arc::new(Basis::Rbf(RbfBasis::on_grid(
                &GridSpec::new(state_ranges.clone(), rbf.value.clone())?,
                rbf.sigma_value.clone(),
                true,
            )?));
            let mut sa_ranges = state_ranges.clone();
            sa_ranges.extend(&action_ranges);
            let ad = Arc::new(Basis::Rbf(RbfBasis::on_grid(
                &GridSpec::new(sa_ranges, rbf.ad.clone())?,
                rbf.sigma_ad.clone(),
                true,
            )?));
            (
                FeatureSet {
                    value: Some(value.clone()),
                    ad: Some(ad),
                    cfun: Some(value.clone()),
                },
                value,
            )
        };

        let default_counts = |dims: usize, desk: &[usize]| -> Vec<usize> {
            if is_lqr {
                vec![3; dims]
            } else {
                desk.to_vec()
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
        let starts: Vec<WindowStart> = match &method.kind {
            MethodKind::Iapi { .. } | MethodKind::Iqpi { .. } => {
                let desk: &[usize] = if matches!(method.kind, MethodKind::Iqpi { .. }) { &[13, 15, 13] } else { &[13, 13, 13] };
                let counts = s.state_actions.clone().unwrap_or_else(|| default_counts(n + m, desk));
                let mut ranges = state_ranges.clone();
                ranges.extend(&action_ranges);
                let grid = GridSpec::new(ranges, counts)?;
                jittered(&grid, s.jitter, &mut rng)
                    .into_iter()
                    .map(|z| WindowStart {
                        x: z.rows(0, n).into_owned(),
                        u: Some(z.rows(n, m).into_owned()),
                    })
                    .collect()
            }
            MethodKind::Icpi { probes } => {
                let counts = s.states.clone().unwrap_or_else(|| default_counts(n, &[41, 41]));
                let grid = GridSpec::new(state_ranges.clone(), counts)?;
                let mut out = Vec::new();
                for x in jittered(&grid, s.jitter, &mut rng) {
                    for p in probes {
                        out.push(WindowStart {
                            x: x.clone(),
                            u: Some(p.clone()),
                        });
                    }
                }
                out
            }
            _ => {
                let counts = s.states.clone().unwrap_or_else(|| default_counts(n, &[41, 41]));
                let grid = GridSpec::new(state_ranges.clone(), counts)?;
                jittered(&grid, s.jitter, &mut rng)
                    .into_iter()
                    .map(|x| WindowStart { x, u: None })
                    .collect()
            }
        };
        let grid_counts = s.grid.clone().unwrap_or_else(|| default_counts(n, &[25, 25]));
        let improvement_grid = GridSpec::new(state_ranges.clone(), grid_counts)?.points();
        let constraint_states = if matches!(method.kind, MethodKind::Iapi { .. }) {
            improvement_grid.clone()
        } else {
            Vec::new()
        };
        let diag_counts = cfg
            .run
            .diagnostic_grid
            .clone()
            .unwrap_or_else(|| if is_lqr { vec![if n <= 2 { 21 } else { 5 }; n] } else { vec![61, 61] });
        let diagnostic_grid = GridSpec::new(state_ranges, diag_counts)?;

        let initial_policy = match (&cfg.run.initial_gain, &lqr) {
            (Some(k), _) => {
                let k = matrix(k, "initial_gain")?;
                if k.nrows() != m || k.ncols() != n {
                    return Err(IpiError::Configuration(format!("initial_gain must be {m}x{n}")));
                }
                StationaryPolicy::Linear(k)
            }
            (None, Some(l)) => StationaryPolicy::Linear(stabilizing_gain(&z_transform(l, gamma)?)?),
            (None, None) => StationaryPolicy::zero(m),
        };

        let behavior = cfg.run.behavior.clone().unwrap_or(match method.kind {
            MethodKind::OnPolicy | MethodKind::Lqr => BehaviorKind::Target,
            MethodKind::Iepi => BehaviorKind::Zero,
            _ => BehaviorKind::Hold,
        });
        let ad = method.kind.is_action_dependent();
        let ok = match &behavior {
            BehaviorKind::Target => matches!(method.kind, MethodKind::OnPolicy | MethodKind::Lqr | MethodKind::Iepi),
            BehaviorKind::Zero => matches!(method.kind, MethodKind::Iepi),
            BehaviorKind::Hold => ad,
            BehaviorKind::Probing { .. } => ad && !env.action_box().is_bounded(),
        };
        if !ok {
            return Err(IpiError::Configuration(format!(
                "behavior {behavior:?} is not usable with method {}",
                method.kind.name()
            )));
        }

        let dt = s.dt.unwrap_or(0.01);
        let substep = s.substep.unwrap_or(if is_lqr { 1e-5 } else { dt / 10.0 });
        crate::dynamics::step_count(dt, substep).map_err(|e| IpiError::Configuration(e.to_string()))?;
        let opts = EvalOptions {
            dt,
            substep,
            quadrature: s.quadrature,
            ridge: cfg
                .run
                .ridge
                .unwrap_or(if is_lqr { Ridge::None } else { Ridge::RelativeTrace(1e-8) }),
            mode: cfg.run.mode,
        };
        if cfg.run.max_iter == 0 {
            return Err(IpiError::Configuration("max_iter must be at least 1".into()));
        }
        Ok(Self {
            env,
            lqr,
            reward: Arc::new(reward),
            method,
            features,
            policy_basis,
            starts,
            constraint_states,
            improvement_grid,
            diagnostic_grid,
            initial_policy,
            behavior,
            opts,
            rud: cfg.run.rud,
            tolerance: cfg.tolerance(),
            max_iter: cfg.run.max_iter,
            check_admissibility: cfg.run.check_admissibility,
            gain_sign_bug: cfg.run.gain_sign_bug,
        })
    }

    fn behavior_for(&self, policy: &StationaryPolicy) -> Result<Behavior> {
        Ok(match &self.behavior {
            BehaviorKind::Target => Behavior::Stationary(policy.clone()),
            BehaviorKind::Zero => Behavior::Stationary(StationaryPolicy::zero(self.env.action_dim())),
            BehaviorKind::Hold => Behavior::Ad(AdBehaviorPolicy::ConstantHold),
            BehaviorKind::Probing { decay } => Behavior::Ad(AdBehaviorPolicy::probing_with(
                policy.clone(),
                *decay,
                Vec::new(),
                Vec::new(),
                self.env.action_box().is_bounded(),
            )?),
        })
    }

    /// Policy evaluation of `policy` under the configured behavior.
    pub fn evaluate(&self, policy: &StationaryPolicy) -> Result<Evaluation> {
        let behavior = self.behavior_for(policy)?;
        evaluate(
            &self.method,
            &self.env,
            &self.reward,
            policy,
            &self.features,
            &behavior,
            &self.starts,
            &self.constraint_states,
            &self.opts,
        )
    }

    /// `v̂(x) = xᵀ P x` of an LQR evaluation.
    pub fn lqr_value_matrix(&self, ev: &Evaluation) -> Result<Matrix> {
        let lqr = self
            .lqr
            .as_ref()
            .ok_or_else(|| IpiError::Configuration("not an LQR problem".into()))?;
        let n = lqr.state_dim();
        let m = lqr.action_dim();
        match &ev.method.kind {
            MethodKind::Iqpi { table_literal, .. } => {
                let k1 = if *table_literal { 1.0 } else { ev.method.iqpi_kappas().expect("IQPI").k1 };
                let StationaryPolicy::Linear(k) = &ev.policy else {
                    return Err(IpiError::Configuration("LQR runs keep linear policies".into()));
                };
                let h = quadratic_weights_to_sym(ev.theta.as_slice(), n + m)?;
                let mut lift = Matrix::zeros(n + m, n);
                lift.view_mut((0, 0), (n, n)).copy_from(&Matrix::identity(n, n));
                lift.view_mut((n, 0), (m, n)).copy_from(k);
                Ok(lift.transpose() * h * lift / k1)
            }
            _ => quadratic_weights_to_sym(ev.theta.rows(0, n * (n + 1) / 2).as_slice(), n),
        }
    }

    /// Policy improvement from an evaluation; returns `π_{i+1}` and the RUD
    /// iteration count when RUD was used.
    pub fn improve(&self, ev: &Evaluation) -> Result<(StationaryPolicy, Option<usize>)> {
        if let Some(lqr) = &self.lqr {
            let n = lqr.state_dim();
            let m = lqr.action_dim();
            let k = match &ev.method.kind {
                MethodKind::OnPolicy | MethodKind::Iepi | MethodKind::Lqr => {
                    let k = lqr_gain(&self.lqr_value_matrix(ev)?, &lqr.b, &lqr.gamma_mat)?;
                    if self.gain_sign_bug {
                        -k
                    } else {
                        k
                    }
                }
                MethodKind::Iapi { .. } => {
                    let lv = n * (n + 1) / 2;
                    quadratic_head_gain(ev.theta.rows(lv, ev.theta.len() - lv).as_slice(), n, m)?
                }
                MethodKind::Iqpi { .. } => quadratic_head_gain(ev.theta.as_slice(), n, m)?,
                MethodKind::Icpi { .. } => {
                    let c = ev.cfun.as_ref().expect("ICPI has a C head");
                    cfun_linear_gain(&c.weights, &lqr.gamma_mat)?
                }
            };
            return Ok((StationaryPolicy::Linear(k), None));
        }
        let reward = self.reward.as_ref();
        match &ev.method.kind {
            MethodKind::OnPolicy | MethodKind::Iepi | MethodKind::Lqr if self.env.is_affine() => {
                let value = ev.value.clone().expect("value head");
                Ok((StationaryPolicy::vgb(self.env.clone(), self.reward.clone(), value)?, None))
            }
            MethodKind::Icpi { .. } => {
                let head = ev.cfun.clone().expect("ICPI has a C head");
                Ok((StationaryPolicy::network(head, self.reward.clone())?, None))
            }
            kind => {
                let value;
                let objective = match kind {
                    MethodKind::Iapi { .. } => ImprovementObjective::Advantage {
                        head: ev.ad.as_ref().expect("IAPI has an advantage head"),
                    },
                    MethodKind::Iqpi { .. } => ImprovementObjective::QFunction {
                        head: ev.ad.as_ref().expect("IQPI has a Q head"),
                    },
                    MethodKind::OnPolicy => {
                        value = ev.value.clone().expect("value head");
                        ImprovementObjective::Hamiltonian {
                            env: &self.env,
                            reward,
                            value: &value,
                        }
                    }
                    _ => {
                        value = ev.value.clone().expect("value head");
                        ImprovementObjective::PartialModelFree {
                            env: &self.env,
                            reward,
                            value: &value,
                        }
                    }
                };
                let m = self.env.action_dim();
                let basis = self.policy_basis.as_ref();
                let grid = &self.improvement_grid;
                let mode = self.opts.mode;
                let grad = |th: &Vector| policy_head_gradient(&objective, reward, basis, grid, th, mode);
                let res = rud_optimize(grad, Vector::zeros(m * basis.len()), &self.rud)?;
                let head = Net::new(
                    self.policy_basis.clone(),
                    Matrix::from_row_slice(m, basis.len(), res.theta.as_slice()),
                )?;
                Ok((StationaryPolicy::network(head, self.reward.clone())?, Some(res.iterations)))
            }
        }
    }
}

/// Box corners `-U` and `-U` with one coordinate flipped to `+U_j`: `m + 1`
/// probes whose differences span the action space.
fn corner_probes(limits: &[f64]) -> Vec<Vector> {
    let low = Vector::from_iterator(limits.len(), limits.iter().map(|l| -l));
    let mut out = vec![low.clone()];
    for (j, l) in limits.iter().enumerate() {
        let mut p = low.clone();
        p[j] = *l;
        out.push(p);
    }
    out
}

fn jittered(grid: &GridSpec, jitter: f64, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    let mut pts = grid.points();
    if jitter > 0.0 {
        let cells: Vec<(f64, f64, f64)> = (0..grid.dim())
            .map(|d| {
                let (lo, hi) = grid.ranges[d];
                let c = grid.counts[d];
                let w = if c > 1 { (hi - lo) / (c - 1) as f64 } else { 0.0 };
                (lo, hi, w)
            })
            .collect();
        for p in &mut pts {
            for (d, (lo, hi, w)) in cells.iter().enumerate() {
                let shift: f64 = rng.random_range(-0.5..=0.5);
                p[d] = (p[d] + shift * jitter * w).clamp(*lo, *hi);
            }
        }
    }
    pts
}

/// Parameters of an LQR iterate: `P_i` of `π_i(x) = K_i x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrIterate {
    pub p: Matrix,
    pub k: Matrix,
}

#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub theta: Vector,
    pub lqr: Option<LqrIterate>,
    pub residual: ResidualStats,
    pub condition: f64,
    pub samples: usize,
    pub dropped: usize,
    /// `v̂_i` on the diagnostic grid.
    pub value_samples: Vec<f64>,
    /// Relative parameter change from the previous record.
    pub theta_change: f64,
    pub rud_iterations: Option<usize>,
    pub wall_time: f64,
    pub evaluation: Evaluation,
}

#[derive(Clone, Debug)]
pub struct IterationLog {
    pub method: String,
    pub grid: GridSpec,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// The last evaluated policy.
    pub final_policy: StationaryPolicy,
}

impl IterationLog {
    pub fn grid_points(&self) -> Vec<Vector> {
        self.grid.points()
    }
}

fn relative_change(new: &Vector, old: &Vector) -> f64 {
    if new.len() != old.len() {
        return f64::INFINITY;
    }
    (new - old).norm() / (1.0 + old.norm())
}

/// Runs the configured experiment.
pub fn run(config: &IpiConfig) -> Result<IterationLog> {
    run_problem(&config.build()?)
}

pub fn run_problem(p: &Problem) -> Result<IterationLog> {
    if p.check_admissibility {
        check_admissibility(p, &p.initial_policy)?;
    }
    let grid_points = p.diagnostic_grid.points();
    let mut policy = p.initial_policy.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    for i in 0..=p.max_iter {
        let started = Instant::now();
        let evaluate = || -> Result<(Evaluation, Option<LqrIterate>, Vec<f64>)> {
            let ev = p.evaluate(&policy)?;
            let lqr = match (&p.lqr, &policy) {
                (Some(_), StationaryPolicy::Linear(k)) => Some(LqrIterate {
                    p: p.lqr_value_matrix(&ev)?,
                    k: k.clone(),
                }),
                _ => None,
            };
            let values = map_slice(p.opts.mode, &grid_points, |x| ev.value_at(x))
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
            Ok((ev, lqr, values))
        };
        let (ev, lqr, value_samples) = evaluate().map_err(|e| e.at_iteration(i))?;
        let theta_change = records
            .last()
            .map(|r| relative_change(&ev.theta, &r.theta))
            .unwrap_or(f64::INFINITY);
        converged = theta_change < p.tolerance;
        let improved = if converged || i == p.max_iter {
            None
        } else {
            Some(p.improve(&ev).map_err(|e| e.at_iteration(i))?)
        };
        log::info!(
            "{} iteration {i}: residual rms {:.3e}, condition {:.3e}, change {:.3e}",
            p.method.kind.name(),
            ev.residual.rms,
            ev.condition,
            theta_change
        );
        records.push(IterationRecord {
            iteration: i,
            theta: ev.theta.clone(),
            lqr,
            residual: ev.residual,
            condition: ev.condition,
            samples: ev.samples,
            dropped: ev.dropped,
            value_samples,
            theta_change,
            rud_iterations: improved.as_ref().and_then(|(_, r)| *r),
            wall_time: started.elapsed().as_secs_f64(),
            evaluation: ev,
        });
        match improved {
            Some((next, _)) => policy = next,
            None => break,
        }
    }
    Ok(IterationLog {
        method: p.method.kind.name().to_string(),
        grid: p.diagnostic_grid.clone(),
        records,
        converged,
        final_policy: policy,
    })
}

/// Exact closed-loop test for linear policies on LQR problems; otherwise
/// the truncated-return heuristic: from a few probe states the discounted
/// return over `T = 10 / ln(1/γ)` must be finite and the next `T` seconds
/// must add at most half of it.
pub fn check_admissibility(p: &Problem, policy: &StationaryPolicy) -> Result<()> {
    if let (Some(lqr), StationaryPolicy::Linear(k)) = (&p.lqr, policy) {
        let zs = z_transform(lqr, p.reward.discount)?;
        let abscissa = spectral_abscissa(&(&zs.a_bar + &zs.b * k));
        if abscissa >= 0.0 {
            return Err(IpiError::Inadmissible { abscissa });
        }
        return Ok(());
    }
    let h = p.opts.substep;
    let gamma = p.reward.discount;
    let t = if gamma < 1.0 { 10.0 / (1.0 / gamma).ln() } else { 50.0 };
    let horizon = (t / h).ceil() * h;
    let pts = p.diagnostic_grid.points();
    let probes: Vec<&Vector> = (0..5).map(|j| &pts[j * (pts.len() - 1) / 4]).collect();
    for x in probes {
        let first = simulate(&p.env, policy, x, 0.0, horizon, h);
        let verdict = first.and_then(|tr| {
            let g1 = p.reward.return_estimate(&tr)?;
            let tail = simulate(&p.env, policy, tr.last_state(), horizon, horizon, h)?;
            let g2 = gamma.powf(horizon) * p.reward.return_estimate(&tail)?;
            Ok((g1, g2))
        });
        match verdict {
            Ok((g1, g2)) if g1.is_finite() && g2.is_finite() && g2.abs() <= 0.5 * g1.abs() + 1e-9 => {}
            Ok(_) | Err(IpiError::NumericalBlowup { .. }) => {
                return Err(IpiError::Inadmissible { abscissa: f64::INFINITY });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Per-point monotonicity of the recorded value samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonotonicityReport {
    pub comparisons: usize,
    /// Points with `v̂_{i+1}(x) < v̂_i(x) - slack`.
    pub violations: usize,
    /// `max (v̂_i(x) - v̂_{i+1}(x))`, or 0 when never decreasing.
    pub worst: f64,
    /// Smallest eigenvalue of `P_{i+1} - P_i` over LQR records.
    pub min_psd_eigenvalue: Option<f64>,
}

pub fn monotonicity_check(log: &IterationLog, slack: f64) -> MonotonicityReport {
    let mut report = MonotonicityReport::default();
    for w in log.records.windows(2) {
        for (a, b) in w[0].value_samples.iter().zip(&w[1].value_samples) {
            report.comparisons += 1;
            report.worst = report.worst.max(a - b);
            if *b < a - slack {
                report.violations += 1;
            }
        }
        if let (Some(p0), Some(p1)) = (&w[0].lqr, &w[1].lqr) {
            let d = &p1.p - &p0.p;
            let sym = (&d + d.transpose()) * 0.5;
            let lo = sym.symmetric_eigenvalues().min();
            report.min_psd_eigenvalue = Some(report.min_psd_eigenvalue.map_or(lo, |c| c.min(lo)));
        }
    }
    report
}

/// `l_π(x, k; v) = γ^{kΔt} v(X_{kΔt})` for `k = 1..=k_max`, simulating under
/// `π` from `x` with substep `h`.
#[allow(clippy::too_many_arguments)]
pub fn boundary_diagnostic<V>(
    env: &Environment,
    policy: &StationaryPolicy,
    value: V,
    x: &Vector,
    k_max: usize,
    dt: f64,
    h: f64,
    gamma: f64,
) -> Result<Vec<f64>>
where
    V: Fn(&Vector) -> Result<f64>,
{
    let per = crate::dynamics::step_count(dt, h)?;
    let traj = simulate(env, policy, x, 0.0, dt * k_max as f64, h)?;
    (1..=k_max)
        .map(|k| Ok(gamma.powf(k as f64 * dt) * value(&traj.states[k * per])?))
        .collect()
}

/// Pointwise relative agreement of two value grids. The denominator is
/// floored at 1% of the larger grid's peak magnitude so that points where
/// both values cross zero do not dominate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridComparison {
    pub max_rel: f64,
    pub mean_rel: f64,
    /// Fraction of points within the tolerance.
    pub within: f64,
}

pub fn compare_value_grids(a: &[f64], b: &[f64], rel_tol: f64) -> Result<GridComparison> {
    if a.len() != b.len() || a.is_empty() {
        return Err(IpiError::InvalidArgument("value grids differ in size".into()));
    }
    let peak = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 0.01 * peak;
    let mut max_rel = 0.0f64;
    let mut sum = 0.0;
    let mut ok = 0usize;
    for (x, y) in a.iter().zip(b) {
        let denom = x.abs().max(y.abs()).max(floor);
        let r = if denom > 0.0 { (x - y).abs() / denom } else { 0.0 };
        max_rel = max_rel.max(r);
        sum += r;
        if r <= rel_tol {
            ok += 1;
        }
    }
    Ok(GridComparison {
        max_rel,
        mean_rel: sum / a.len() as f64,
        within: ok as f64 / a.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::wrap_angle;

    fn p_sequence(log: &IterationLog) -> Vec<f64> {
        log.records.iter().map(|r| r.lqr.as_ref().unwrap().p[(0, 0)]).collect()
    }

    fn scalar(method: MethodConfig) -> IterationLog {
        run(&IpiConfig::lqr_scalar(method)).unwrap()
    }

    #[test]
    fn scalar_lqr_converges_to_riccati_solution() {
        let log = scalar(MethodConfig::Lqr);
        let ps = p_sequence(&log);
        assert!((ps[0] + 1.25).abs() < 1e-8);
        assert!((ps[1] + 1.025).abs() < 1e-8);
        let hit = ps.iter().position(|p| (p + 1.0).abs() < 1e-6).unwrap();
        assert!(hit < 8, "{ps:?}");
        assert!(log.converged);
        let StationaryPolicy::Linear(k) = &log.final_policy else { panic!() };
        assert!((k[(0, 0)] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn off_policy_methods_reproduce_on_policy_sequence() {
        let reference = p_sequence(&scalar(MethodConfig::OnPolicy));
        let iepi = p_sequence(&scalar(MethodConfig::Iepi));
        assert_eq!(reference.len(), iepi.len());
        for (a, b) in reference.iter().zip(&iepi) {
            assert!((a - b).abs() < 1e-8, "{reference:?} vs {iepi:?}");
        }
        for m in [
            MethodConfig::Iapi { constraint_weight: 1.0 },
            MethodConfig::Iqpi {
                beta: 1.0,
                kappa: None,
                table_literal: false,
            },
            MethodConfig::Icpi { probes: None },
        ] {
            let ps = p_sequence(&scalar(m));
            for (a, b) in reference.iter().zip(&ps) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn on_policy_equals_iepi_with_target_behavior() {
        let on = scalar(MethodConfig::OnPolicy);
        let mut cfg = IpiConfig::lqr_scalar(MethodConfig::Iepi);
        cfg.run.behavior = Some(BehaviorKind::Target);
        let iepi = run(&cfg).unwrap();
        for (a, b) in on.records.iter().zip(&iepi.records) {
            assert_eq!(a.theta, b.theta);
        }
    }

    #[test]
    fn lqr_values_improve_monotonically() {
        let log = scalar(MethodConfig::Lqr);
        let report = monotonicity_check(&log, 1e-8);
        assert_eq!(report.violations, 0);
        assert!(report.min_psd_eigenvalue.unwrap() >= -1e-9);
        let mut one = log.clone();
        one.records.truncate(1);
        assert_eq!(monotonicity_check(&one, 0.0), MonotonicityReport::default());
    }

    #[test]
    fn quadratic_convergence_ratio_is_stable() {
        let ps = p_sequence(&scalar(MethodConfig::Lqr));
        let e: Vec<f64> = ps.iter().map(|p| (p + 1.0).abs()).collect();
        let ratios: Vec<f64> = e
            .windows(2)
            .filter(|w| (1e-6..=1e-1).contains(&w[0]))
            .map(|w| w[1] / (w[0] * w[0]))
            .collect();
        assert!(ratios.len() >= 2);
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(ratios.iter().all(|r| (r - mean).abs() <= 0.5 * mean), "{ratios:?}");
    }

    #[test]
    fn inadmissible_initial_gain_aborts_before_iterating() {
        let mut cfg = IpiConfig::lqr_scalar(MethodConfig::Lqr);
        cfg.run.initial_gain = Some(vec![vec![0.5]]);
        assert!(matches!(run(&cfg), Err(IpiError::Inadmissible { .. })));
    }

    #[test]
    fn default_lqr_initial_gain_is_stabilizing() {
        let mut cfg = IpiConfig::lqr_scalar(MethodConfig::Lqr);
        cfg.run.initial_gain = None;
        let ps = p_sequence(&run(&cfg).unwrap());
        assert!((ps.last().unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn flipped_gain_breaks_convergence() {
        let mut cfg = IpiConfig::lqr_scalar(MethodConfig::Lqr);
        cfg.run.gain_sign_bug = true;
        let log = run(&cfg).unwrap();
        assert!(!log.converged);
        let ps = p_sequence(&log);
        assert!(ps.iter().any(|p| *p > 0.5), "{ps:?}");
    }

    #[test]
    fn boundary_term_vanishes_for_admissible_gain() {
        let p = IpiConfig::lqr_scalar(MethodConfig::Lqr).build().unwrap();
        let pk = -1.25;
        let l = boundary_diagnostic(
            &p.env,
            &StationaryPolicy::Linear(Matrix::from_element(1, 1, -0.5)),
            |x: &Vector| Ok(pk * x[0] * x[0]),
            &Vector::from_element(1, 1.0),
            40,
            0.5,
            1e-3,
            p.reward.discount,
        )
        .unwrap();
        assert!(l.last().unwrap().abs() < 1e-6);
        // Closed loop x' = 0.5x: |γ^t v(X_t)| = 1.25 e^{-2t} e^{t}.
        let grow = boundary_diagnostic(
            &p.env,
            &StationaryPolicy::Linear(Matrix::from_element(1, 1, 1.5)),
            |x: &Vector| Ok(pk * x[0] * x[0]),
            &Vector::from_element(1, 1.0),
            10,
            0.5,
            1e-3,
            p.reward.discount,
        )
        .unwrap();
        assert!(grow.windows(2).all(|w| w[1].abs() > w[0].abs()));
    }

    #[test]
    fn boundary_term_of_bounded_value_decays_geometrically() {
        let p = IpiConfig::pendulum_desk(MethodConfig::Iepi).build().unwrap();
        let l = boundary_diagnostic(
            &p.env,
            &StationaryPolicy::zero(1),
            |x: &Vector| Ok(100.0 * x[0].cos()),
            &Vector::from_vec(vec![0.3, 0.0]),
            50,
            0.1,
            1e-3,
            0.1,
        )
        .unwrap();
        for (k, v) in l.iter().enumerate() {
            assert!(v.abs() <= 0.1f64.powf((k + 1) as f64 * 0.1) * 100.0 + 1e-9);
        }
    }

    #[test]
    fn pendulum_zero_policy_is_admissible() {
        let p = IpiConfig::pendulum_desk(MethodConfig::Iepi).build().unwrap();
        check_admissibility(&p, &p.initial_policy).unwrap();
    }

    #[test]
    fn config_schema() {
        let json = r#"{
            "environment": {"kind": "lqr", "a": [[1]], "b": [[1]], "c": [[1]]},
            "reward": {"discount": 0.1353352832366127},
            "method": {"name": "icpi", "probes": [[-1], [1]]},
            "run": {"initial_gain": [[-0.5]], "max_iter": 4}
        }"#;
        let cfg: IpiConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.run.max_iter, 4);
        let back: IpiConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let typo = json.replace("\"max_iter\"", "\"max_iters\"");
        assert!(serde_json::from_str::<IpiConfig>(&typo).is_err());
        let missing = r#"{"environment": {"kind": "pendulum"}, "reward": {"discount": 0.1}}"#;
        let err = serde_json::from_str::<IpiConfig>(missing).unwrap_err();
        assert!(err.to_string().contains("method"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = IpiConfig::pendulum_desk(MethodConfig::Lqr);
        assert!(matches!(cfg.build(), Err(IpiError::Configuration(_))));
        cfg.method = MethodConfig::Iapi { constraint_weight: 1.0 };
        cfg.run.behavior = Some(BehaviorKind::Zero);
        assert!(matches!(cfg.build(), Err(IpiError::Configuration(_))));
        cfg.run.behavior = Some(BehaviorKind::Probing { decay: 1.0 });
        assert!(matches!(cfg.build(), Err(IpiError::Configuration(_))));
        cfg.method = MethodConfig::Icpi {
            probes: Some(vec![vec![-6.0], vec![5.0]]),
        };
        cfg.run.behavior = None;
        assert!(matches!(cfg.build(), Err(IpiError::Configuration(_))));
    }

    #[test]
    fn default_probes_are_box_corners() {
        let p = IpiConfig::pendulum_desk(MethodConfig::Icpi { probes: None }).build().unwrap();
        let MethodKind::Icpi { probes } = &p.method.kind else { panic!() };
        assert_eq!(probes, &vec![Vector::from_element(1, -5.0), Vector::from_element(1, 5.0)]);
        assert_eq!(p.starts.len(), 2 * 1681);
    }

    #[test]
    fn jitter_is_seeded_and_stays_in_region() {
        let mut cfg = IpiConfig::pendulum_desk(MethodConfig::Iepi);
        cfg.sampling.jitter = 1.0;
        cfg.run.seed = 9;
        let a = cfg.build().unwrap();
        let b = cfg.build().unwrap();
        assert!(a.starts.iter().zip(&b.starts).all(|(s, t)| s.x == t.x));
        assert!(a.starts.iter().all(|s| s.x[0].abs() <= PI && s.x[1].abs() <= 6.0));
        cfg.run.seed = 10;
        let c = cfg.build().unwrap();
        assert!(a.starts.iter().zip(&c.starts).any(|(s, t)| s.x != t.x));
    }

    #[test]
    fn pendulum_runs_are_deterministic() {
        let mut cfg = IpiConfig::pendulum_desk(MethodConfig::Icpi { probes: None });
        cfg.run.max_iter = 2;
        cfg.sampling.states = Some(vec![13, 13]);
        cfg.rbf.value = vec![7, 7];
        cfg.run.diagnostic_grid = Some(vec![11, 11]);
        let a = run(&cfg).unwrap();
        cfg.run.mode = ExecMode::Sequential;
        let b = run(&cfg).unwrap();
        for (r, s) in a.records.iter().zip(&b.records) {
            assert_eq!(r.theta, s.theta);
            assert_eq!(r.value_samples, s.value_samples);
        }
        let x = Vector::from_vec(vec![wrap_angle(7.0), 1.0]);
        assert_eq!(a.final_policy.eval(&x), b.final_policy.eval(&x));
    }

    #[test]
    fn grid_comparison() {
        let a = [1.0, -2.0, 0.0, 4.0];
        let same = compare_value_grids(&a, &a, 0.15).unwrap();
        assert_eq!((same.max_rel, same.within), (0.0, 1.0));
        let b = [1.1, -2.0, 0.01, 4.0];
        let c = compare_value_grids(&a, &b, 0.15).unwrap();
        // 0 vs 0.01 is judged against the floor 0.04.
        assert!((c.max_rel - 0.25).abs() < 1e-12);
        assert_eq!(c.within, 0.75);
        assert!(compare_value_grids(&a, &b[..3], 0.15).is_err());
    }
}
