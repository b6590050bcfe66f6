//! Policy evaluation as one least-squares problem `ψᵀθ = b` per sample
//! window, for every method in the family.
//!
//! Row layout per method (`φ` value features, `φ_AD` state-action features,
//! `φ_c` C-function features, `ξ = U - π(X)`):
//!
//! | method | ψ | b |
//! |---|---|---|
//! | on-policy, IEPI, LQR | `D_γ(φ) + I_γ(∇φ (f_c(X,U) - f_c(X,π(X))))` | `I_γ(R^π)` |
//! | IAPI | `[D_γ(φ); I_γ(φ_AD - φ_AD^π)]` | `I_γ(R)` |
//! | IQPI | `D_β(φ_AD^π) + κ2 I_β(φ_AD) - κ3 I_β(φ_AD^π)` | `κ1 I_β(R)` |
//! | ICPI | `[D_γ(φ); I_γ(φ_c ⊗ ξ)]` | `I_γ(R^π)` |
//!
//! with `κ3 = κ2 - ln(β/γ)`. The simplified IQPI uses `κ1 = κ2 = ln(β/γ)`.
//! IAPI adds constraint rows `[0; φ_AD(x, π(x))]θ = 0` on a state grid.

use std::sync::Arc;

use crate::dynamics::{Environment, LqrEnvironment};
use crate::funcapprox::{quadratic_weights_to_sym, Basis, Net};
use crate::lqr_oracle::{spectral_abscissa, z_transform};
use crate::par::{map_slice, ExecMode};
use crate::policies::StationaryPolicy;
use crate::rewards::RewardSpec;
use crate::rollout::{collect_windows, Behavior, Quadrature, SampleWindow, WindowStart};
use crate::{IpiError, Matrix, Result, Vector};

/// Condition estimate above which a solve is refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub enum IqpiGains {
    /// `κ1 = κ2 = ln(β/γ)`, so `κ3 = 0`.
    Simplified,
    General { k1: f64, k2: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum MethodKind {
    OnPolicy,
    Iepi,
    Iapi {
        constraint_weight: f64,
    },
    Iqpi {
        beta: f64,
        gains: IqpiGains,
        /// Drop the integral gain, as in the tabulated unified form.
        table_literal: bool,
    },
    Icpi {
        probes: Vec<Vector>,
    },
    Lqr,
}

impl MethodKind {
    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::OnPolicy => "onpolicy",
            MethodKind::Iepi => "iepi",
            MethodKind::Iapi { .. } => "iapi",
            MethodKind::Iqpi { .. } => "iqpi",
            MethodKind::Icpi { .. } => "icpi",
            MethodKind::Lqr => "lqr",
        }
    }

    /// Methods whose windows start from a state-action pair.
    pub fn is_action_dependent(&self) -> bool {
        matches!(self, MethodKind::Iapi { .. } | MethodKind::Iqpi { .. } | MethodKind::Icpi { .. })
    }
}

/// Validated evaluation method with its discount factor.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMethod {
    pub kind: MethodKind,
    pub gamma: f64,
}

/// `(κ1, κ2, κ3)` of an IQPI setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IqpiKappas {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl EvalMethod {
    pub fn new(kind: MethodKind, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(IpiError::InvalidArgument(format!("discount factor must lie in (0, 1], got {gamma}")));
        }
        match &kind {
            MethodKind::Iapi { constraint_weight } if !(*constraint_weight > 0.0) => {
                return Err(IpiError::InvalidArgument("constraint weight must be positive".into()));
            }
            MethodKind::Iqpi { beta, gains, .. } => {
                if !(*beta > 0.0 && beta.is_finite()) {
                    return Err(IpiError::InvalidArgument(format!("β must be positive, got {beta}")));
                }
                match gains {
                    IqpiGains::Simplified if (beta / gamma).ln().abs() < 1e-12 => {
                        return Err(IpiError::InvalidArgument("simplified IQPI needs β ≠ γ".into()));
                    }
                    IqpiGains::General { k1, k2 } if !(k1 * k2 > 0.0) => {
                        return Err(IpiError::InvalidArgument("IQPI gains need κ1κ2 > 0".into()));
                    }
                    _ => {}
                }
            }
            MethodKind::Icpi { probes } => check_span(probes)?,
            _ => {}
        }
        Ok(Self { kind, gamma })
    }

    pub fn iqpi_kappas(&self) -> Option<IqpiKappas> {
        match &self.kind {
            MethodKind::Iqpi { beta, gains, .. } => {
                let log_ratio = (beta / self.gamma).ln();
                let (k1, k2) = match gains {
                    IqpiGains::Simplified => (log_ratio, log_ratio),
                    IqpiGains::General { k1, k2 } => (*k1, *k2),
                };
                Some(IqpiKappas { k1, k2, k3: k2 - log_ratio })
            }
            _ => None,
        }
    }

    /// Weighting base of the integrals: `β` for IQPI, `γ` otherwise.
    pub fn alpha(&self) -> f64 {
        match &self.kind {
            MethodKind::Iqpi { beta, .. } => *beta,
            _ => self.gamma,
        }
    }
}

/// `span{u_j - u_{j-1}} = R^m`.
fn check_span(probes: &[Vector]) -> Result<()> {
    let m = probes.first().map(|p| p.len()).unwrap_or(0);
    if m == 0 || probes.len() < m + 1 || probes.iter().any(|p| p.len() != m) {
        return Err(IpiError::InvalidArgument(format!("ICPI needs at least {} probe actions of dim {m}", m + 1)));
    }
    let diffs = Matrix::from_columns(&probes.windows(2).map(|w| &w[1] - &w[0]).collect::<Vec<_>>());
    let sv = diffs.singular_values();
    let tol = 1e-10 * (1.0 + sv.max());
    if sv.iter().filter(|s| **s > tol).count() < m {
        return Err(IpiError::InvalidArgument("ICPI probe differences do not span the action space".into()));
    }
    Ok(())
}

/// Feature maps for the heads a method needs.
#[derive(Clone, Debug, Default)]
pub struct FeatureSet {
    /// `φ` on states.
    pub value: Option<Arc<Basis>>,
    /// `φ_AD` on `[x; u]`.
    pub ad: Option<Arc<Basis>>,
    /// `φ_c` on states.
    pub cfun: Option<Arc<Basis>>,
}

fn need<'a>(b: &'a Option<Arc<Basis>>, what: &str, method: &MethodKind) -> Result<&'a Arc<Basis>> {
    b.as_ref()
        .ok_or_else(|| IpiError::Configuration(format!("{} needs {what} features", method.name())))
}

/// Parameter blocks `(L_v, L_ad, L_c)`, where `L_c` already counts the
/// `m` output rows.
pub fn param_layout(method: &EvalMethod, features: &FeatureSet, m: usize) -> Result<(usize, usize, usize)> {
    let k = &method.kind;
    Ok(match k {
        MethodKind::OnPolicy | MethodKind::Iepi | MethodKind::Lqr => (need(&features.value, "value", k)?.len(), 0, 0),
        MethodKind::Iapi { .. } => (
            need(&features.value, "value", k)?.len(),
            need(&features.ad, "state-action", k)?.len(),
            0,
        ),
        MethodKind::Iqpi { .. } => (0, need(&features.ad, "state-action", k)?.len(), 0),
        MethodKind::Icpi { .. } => (
            need(&features.value, "value", k)?.len(),
            0,
            m * need(&features.cfun, "C-function", k)?.len(),
        ),
    })
}

/// Everything needed to turn a window into a row.
pub struct EvalContext<'a> {
    pub method: &'a EvalMethod,
    pub env: &'a Environment,
    pub reward: &'a RewardSpec,
    pub policy: &'a StationaryPolicy,
    pub features: &'a FeatureSet,
    pub quadrature: Quadrature,
}

fn stack(x: &Vector, u: &Vector) -> Vector {
    let mut z = Vector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

impl EvalContext<'_> {
    pub fn param_len(&self) -> Result<usize> {
        let (a, b, c) = param_layout(self.method, self.features, self.env.action_dim())?;
        Ok(a + b + c)
    }

    /// `(ψ, b)` for one window.
    pub fn assemble_sample(&self, w: &SampleWindow) -> Result<(Vector, f64)> {
        let (lv, lad, lc) = param_layout(self.method, self.features, self.env.action_dim())?;
        let l = lv + lad + lc;
        let alpha = self.method.alpha();
        let pi = self.policy;
        let reward = self.reward;
        let env = self.env;
        let feats = self.features;
        let fail: std::cell::Cell<Option<IpiError>> = std::cell::Cell::new(None);
        let guard = |r: Result<Vector>, len: usize| -> Vector {
            r.unwrap_or_else(|e| {
                fail.set(Some(e));
                Vector::from_element(len, f64::NAN)
            })
        };
        let r_of = |x: &Vector, u: &Vector| -> f64 {
            reward.reward(x, u).unwrap_or_else(|e| {
                fail.set(Some(e));
                f64::NAN
            })
        };
        let (mut psi, integral) = match &self.method.kind {
            MethodKind::OnPolicy | MethodKind::Iepi | MethodKind::Lqr => {
                let phi = feats.value.as_ref().expect("layout checked");
                let d = w.difference(alpha, |x| guard(phi.features(x), lv));
                let int = w.integral(alpha, self.quadrature, |x, u| {
                    let p = pi.eval(x);
                    let dfc = env.coupling(x, u) - env.coupling(x, &p);
                    let mut out = Vector::zeros(l + 1);
                    if dfc.iter().any(|c| *c != 0.0) {
                        let jac = phi.jacobian(x).unwrap_or_else(|e| {
                            fail.set(Some(e));
                            Matrix::from_element(lv, x.len(), f64::NAN)
                        });
                        out.rows_mut(0, lv).copy_from(&(jac * dfc));
                    }
                    out[l] = r_of(x, &p);
                    out
                })?;
                (d, int)
            }
            MethodKind::Iapi { .. } => {
                let phi = feats.value.as_ref().expect("layout checked");
                let ad = feats.ad.as_ref().expect("layout checked");
                let mut d = Vector::zeros(l);
                d.rows_mut(0, lv).copy_from(&w.difference(alpha, |x| guard(phi.features(x), lv)));
                let int = w.integral(alpha, self.quadrature, |x, u| {
                    let p = pi.eval(x);
                    let mut out = Vector::zeros(l + 1);
                    if u != &p {
                        let fa = guard(ad.features(&stack(x, u)), lad) - guard(ad.features(&stack(x, &p)), lad);
                        out.rows_mut(lv, lad).copy_from(&fa);
                    }
                    out[l] = r_of(x, u);
                    out
                })?;
                (d, int)
            }
            MethodKind::Iqpi { table_literal, .. } => {
                let ad = feats.ad.as_ref().expect("layout checked");
                let k = self.method.iqpi_kappas().expect("IQPI");
                let (k1, k2, k3) = if *table_literal { (1.0, 1.0, 0.0) } else { (k.k1, k.k2, k.k3) };
                let d = w.difference(alpha, |x| guard(ad.features(&stack(x, &pi.eval(x))), lad));
                let int = w.integral(alpha, self.quadrature, |x, u| {
                    let mut out = Vector::zeros(l + 1);
                    let mut f = guard(ad.features(&stack(x, u)), lad) * k2;
                    if k3 != 0.0 {
                        f -= guard(ad.features(&stack(x, &pi.eval(x))), lad) * k3;
                    }
                    out.rows_mut(0, lad).copy_from(&f);
                    out[l] = k1 * r_of(x, u);
                    out
                })?;
                (d, int)
            }
            MethodKind::Icpi { .. } => {
                let phi = feats.value.as_ref().expect("layout checked");
                let cf = feats.cfun.as_ref().expect("layout checked");
                let nc = cf.len();
                let mut d = Vector::zeros(l);
                d.rows_mut(0, lv).copy_from(&w.difference(alpha, |x| guard(phi.features(x), lv)));
                let int = w.integral(alpha, self.quadrature, |x, u| {
                    let p = pi.eval(x);
                    let xi = u - &p;
                    let mut out = Vector::zeros(l + 1);
                    if xi.iter().any(|c| *c != 0.0) {
                        let fc = guard(cf.features(x), nc);
                        for (k, xk) in xi.iter().enumerate() {
                            out.rows_mut(lv + k * nc, nc).copy_from(&(&fc * *xk));
                        }
                    }
                    out[l] = r_of(x, &p);
                    out
                })?;
                (d, int)
            }
        };
        if let Some(e) = fail.take() {
            return Err(e);
        }
        psi += integral.rows(0, l);
        Ok((psi, integral[l]))
    }

    /// IAPI constraint rows `[0; φ_AD(x, π(x))]`, scaled by the square root
    /// of the constraint weight.
    pub fn constraint_rows(&self, states: &[Vector]) -> Result<Matrix> {
        let MethodKind::Iapi { constraint_weight } = self.method.kind else {
            return Ok(Matrix::zeros(0, self.param_len()?));
        };
        let (lv, lad, _) = param_layout(self.method, self.features, self.env.action_dim())?;
        let ad = self.features.ad.as_ref().expect("layout checked");
        let scale = constraint_weight.sqrt();
        let mut rows = Matrix::zeros(states.len(), lv + lad);
        for (i, x) in states.iter().enumerate() {
            let f = ad.features(&stack(x, &self.policy.eval(x)))?;
            rows.view_mut((i, lv), (1, lad)).copy_from(&(f.transpose() * scale));
        }
        Ok(rows)
    }
}

/// Stacked least-squares data.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    /// `N x L` rows `ψᵀ`.
    pub psi: Matrix,
    pub b: Vector,
    /// Constraint rows with zero targets.
    pub constraints: Matrix,
    pub gram: Matrix,
    pub constraint_gram: Matrix,
    pub rhs: Vector,
}

impl LinearSystem {
    pub fn from_rows(rows: Vec<(Vector, f64)>, constraints: Matrix) -> Result<Self> {
        let l = rows
            .first()
            .map(|r| r.0.len())
            .ok_or(IpiError::InsufficientData { valid: 0, required: 1 })?;
        let n = rows.len();
        let mut psi = Matrix::zeros(n, l);
        let mut b = Vector::zeros(n);
        for (i, (p, bi)) in rows.iter().enumerate() {
            psi.set_row(i, &p.transpose());
            b[i] = *bi;
        }
        let gram = psi.tr_mul(&psi);
        let constraint_gram = if constraints.nrows() > 0 {
            constraints.tr_mul(&constraints)
        } else {
            Matrix::zeros(l, l)
        };
        let rhs = psi.tr_mul(&b);
        Ok(Self {
            psi,
            b,
            constraints,
            gram,
            constraint_gram,
            rhs,
        })
    }

    pub fn param_len(&self) -> usize {
        self.psi.ncols()
    }

    pub fn sample_count(&self) -> usize {
        self.psi.nrows()
    }
}

/// Regularization added to the normal equations.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    None,
    Fixed(f64),
    /// `c · trace(G) / L`.
    RelativeTrace(f64),
}

impl Ridge {
    pub fn lambda(&self, gram: &Matrix) -> f64 {
        match *self {
            Ridge::None => 0.0,
            Ridge::Fixed(l) => l,
            Ridge::RelativeTrace(c) => c * gram.trace() / gram.nrows().max(1) as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub theta: Vector,
    /// `(max_i L_ii / min_i L_ii)²` of the Cholesky factor.
    pub condition: f64,
    pub ridge: f64,
}

/// `θ = (G + G_c + λI)⁻¹ Ψᵀb` via Cholesky.
pub fn solve(system: &LinearSystem, ridge: Ridge) -> Result<Solution> {
    let l = system.param_len();
    let lambda = ridge.lambda(&system.gram);
    if lambda > 0.0 {
        log::debug!("ridge λ = {lambda:e} active");
    }
    let a = &system.gram + &system.constraint_gram + Matrix::identity(l, l) * lambda;
    let chol = a.cholesky().ok_or(IpiError::IllConditioned { condition: f64::INFINITY })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
    let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(IpiError::IllConditioned { condition });
    }
    let theta = chol.solve(&system.rhs);
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(IpiError::IllConditioned { condition });
    }
    Ok(Solution {
        theta,
        condition,
        ridge: lambda,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualStats {
    pub rms: f64,
    pub max: f64,
}

/// Statistics of `ε = Ψθ - b`.
pub fn residual_stats(system: &LinearSystem, theta: &Vector) -> ResidualStats {
    let eps = &system.psi * theta - &system.b;
    let n = eps.len().max(1) as f64;
    ResidualStats {
        rms: (eps.norm_squared() / n).sqrt(),
        max: eps.amax(),
    }
}

/// Result of one policy evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub method: EvalMethod,
    pub theta: Vector,
    /// `v̂`; absent for IQPI, whose value is read off `q̂`.
    pub value: Option<Net>,
    /// `â` (IAPI) or `q̂` (IQPI) on `[x; u]`.
    pub ad: Option<Net>,
    /// `ĉ` with `m` outputs (ICPI).
    pub cfun: Option<Net>,
    pub policy: StationaryPolicy,
    pub residual: ResidualStats,
    pub condition: f64,
    pub ridge: f64,
    pub samples: usize,
    pub dropped: usize,
}

impl Evaluation {
    /// `v̂(x)`, or `q̂(x, π(x)) / κ1` for IQPI.
    pub fn value_at(&self, x: &Vector) -> Result<f64> {
        if let Some(v) = &self.value {
            return v.eval_scalar(x);
        }
        let q = self.ad.as_ref().expect("IQPI has a q head");
        let k1 = match &self.method.kind {
            MethodKind::Iqpi { table_literal: true, .. } => 1.0,
            _ => self.method.iqpi_kappas().map(|k| k.k1).unwrap_or(1.0),
        };
        Ok(q.eval_scalar(&stack(x, &self.policy.eval(x)))? / k1)
    }

    pub fn ad_at(&self, x: &Vector, u: &Vector) -> Result<f64> {
        let h = self
            .ad
            .as_ref()
            .ok_or_else(|| IpiError::Configuration("method has no action-dependent head".into()))?;
        h.eval_scalar(&stack(x, u))
    }
}

/// Splits `θ` into heads according to the method layout.
pub fn split_heads(method: &EvalMethod, features: &FeatureSet, m: usize, theta: &Vector) -> Result<(Option<Net>, Option<Net>, Option<Net>)> {
    let (lv, lad, lc) = param_layout(method, features, m)?;
    let value = if lv > 0 {
        Some(Net::scalar(features.value.clone().expect("layout"), &theta.rows(0, lv).into_owned())?)
    } else {
        None
    };
    let ad = if lad > 0 {
        Some(Net::scalar(features.ad.clone().expect("layout"), &theta.rows(lv, lad).into_owned())?)
    } else {
        None
    };
    let cfun = if lc > 0 {
        let basis = features.cfun.clone().expect("layout");
        let nc = basis.len();
        Some(Net::new(basis, Matrix::from_row_slice(m, nc, theta.rows(lv + lad, lc).as_slice()))?)
    } else {
        None
    };
    Ok((value, ad, cfun))
}

/// Minimum number of valid windows; fewer than `2L` is allowed with a warning.
pub fn check_sample_count(valid: usize, l: usize) -> Result<()> {
    if valid < l {
        return Err(IpiError::InsufficientData { valid, required: l });
    }
    if valid < 2 * l {
        log::warn!("{valid} valid windows for {l} parameters (fewer than 2L)");
    }
    Ok(())
}

/// Options for [`evaluate`].
#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub dt: f64,
    pub substep: f64,
    pub quadrature: Quadrature,
    pub ridge: Ridge,
    pub mode: ExecMode,
}

/// Collects windows under `behavior` from `starts`, assembles and solves.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    method: &EvalMethod,
    env: &Environment,
    reward: &RewardSpec,
    policy: &StationaryPolicy,
    features: &FeatureSet,
    behavior: &Behavior,
    starts: &[WindowStart],
    constraint_states: &[Vector],
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let ctx = EvalContext {
        method,
        env,
        reward,
        policy,
        features,
        quadrature: opts.quadrature,
    };
    let l = ctx.param_len()?;
    let (windows, dropped) = collect_windows(env, behavior, starts, opts.dt, opts.substep, opts.mode)?;
    let rows = map_slice(opts.mode, &windows, |w| ctx.assemble_sample(w));
    let mut valid = Vec::with_capacity(rows.len());
    let mut bad = dropped;
    for r in rows {
        match r {
            Ok(row) => valid.push(row),
            Err(IpiError::NonFinite { .. }) => bad += 1,
            Err(e) => return Err(e),
        }
    }
    check_sample_count(valid.len(), l)?;
    let system = LinearSystem::from_rows(valid, ctx.constraint_rows(constraint_states)?)?;
    let sol = solve(&system, opts.ridge)?;
    let residual = residual_stats(&system, &sol.theta);
    let (value, ad, cfun) = split_heads(method, features, env.action_dim(), &sol.theta)?;
    Ok(Evaluation {
        method: method.clone(),
        theta: sol.theta,
        value,
        ad,
        cfun,
        policy: policy.clone(),
        residual,
        condition: sol.condition,
        ridge: sol.ridge,
        samples: system.sample_count(),
        dropped: bad,
    })
}

/// Window settings for the sampled LQR evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LqrSampling {
    pub dt: f64,
    pub substep: f64,
}

impl Default for LqrSampling {
    fn default() -> Self {
        Self { dt: 0.01, substep: 1e-5 }
    }
}

/// Nonzero points of `{-1, 0, 1}^n`.
pub fn lqr_sample_states(n: usize) -> Vec<Vector> {
    let total = 3usize.pow(n as u32);
    (0..total)
        .map(|mut code| {
            Vector::from_iterator(
                n,
                (0..n).map(|_| {
                    let d = code % 3;
                    code /= 3;
                    d as f64 - 1.0
                }),
            )
        })
        .filter(|v| v.iter().any(|c| *c != 0.0))
        .collect()
}

/// Sampled on-policy evaluation of `u = Kx` with quadratic features,
/// returned as the symmetric `P` with `v(x) = xᵀPx`.
pub fn lqr_policy_eval(env: &LqrEnvironment, k: &Matrix, gamma: f64, sampling: LqrSampling) -> Result<Matrix> {
    let zs = z_transform(env, gamma)?;
    let abscissa = spectral_abscissa(&(&zs.a_bar + &zs.b * k));
    if abscissa >= 0.0 {
        return Err(IpiError::Inadmissible { abscissa });
    }
    let n = env.state_dim();
    let e = Environment::from_lqr(env)?;
    let reward = RewardSpec::lqr(env.c.clone(), env.gamma_mat.clone(), gamma)?;
    let method = EvalMethod::new(MethodKind::Lqr, gamma)?;
    let features = FeatureSet {
        value: Some(Arc::new(Basis::Quadratic { dim: n })),
        ..FeatureSet::default()
    };
    let policy = StationaryPolicy::Linear(k.clone());
    let starts: Vec<WindowStart> = lqr_sample_states(n).into_iter().map(|x| WindowStart { x, u: None }).collect();
    let opts = EvalOptions {
        dt: sampling.dt,
        substep: sampling.substep,
        quadrature: Quadrature::Composite,
        ridge: Ridge::None,
        mode: ExecMode::Sequential,
    };
    let ev = evaluate(&method, &e, &reward, &policy, &features, &Behavior::Stationary(policy.clone()), &starts, &[], &opts)?;
    quadratic_weights_to_sym(ev.theta.as_slice(), n)
}
