//! Policy improvement: VGB greedy, grid argmax with golden-section
//! refinement, the LQR gain update, and RUD training of policy heads.

use crate::dynamics::{ActionBox, Environment};
use crate::funcapprox::{quadratic_weights_to_sym, Basis, Net};
use crate::par::{map_slice, ExecMode};
use crate::rewards::RewardSpec;
use crate::{IpiError, Matrix, Result, Vector};

/// `σ(F_cᵀ(x) ∇v̂ᵀ(x))`.
pub fn vgb_greedy(env: &Environment, reward: &RewardSpec, value: &Net, x: &Vector) -> Result<Vector> {
    let fc = env
        .coupling_matrix(x)
        .ok_or_else(|| IpiError::Configuration("VGB greedy needs input-affine dynamics".into()))?;
    let grad = value.gradient(x)?;
    let xi = (fc.transpose() * grad.transpose()).column(0).into_owned();
    Ok(reward.sigma(&xi))
}

/// `K = Γ⁻¹ Bᵀ P`.
pub fn lqr_gain(p: &Matrix, b: &Matrix, gamma_mat: &Matrix) -> Result<Matrix> {
    let chol = gamma_mat
        .clone()
        .cholesky()
        .ok_or_else(|| IpiError::InvalidArgument("Γ must be positive definite".into()))?;
    Ok(chol.solve(&(b.transpose() * p)))
}

/// Maximizer `u = K x` of a quadratic head `[x; u]ᵀ H [x; u]`:
/// `K = -H_uu⁻¹ H_ux`, requiring `H_uu < 0`.
pub fn quadratic_head_gain(theta: &[f64], n: usize, m: usize) -> Result<Matrix> {
    let h = quadratic_weights_to_sym(theta, n + m)?;
    let huu = h.view((n, n), (m, m)).into_owned();
    let hux = h.view((n, 0), (m, n)).into_owned();
    let neg = (-huu)
        .cholesky()
        .ok_or_else(|| IpiError::Domain("head is not strictly concave in the action".into()))?;
    Ok(neg.solve(&hux))
}

/// ICPI improvement for LQR: `σ(Θ_c x) = ½ Γ⁻¹ Θ_c x`.
pub fn cfun_linear_gain(theta_c: &Matrix, gamma_mat: &Matrix) -> Result<Matrix> {
    Ok(lqr_gain(&Matrix::identity(theta_c.ncols(), theta_c.ncols()), &theta_c.transpose(), gamma_mat)? * 0.5)
}

/// Objective maximized over actions at a fixed state.
#[derive(Clone, Copy, Debug)]
pub enum ImprovementObjective<'a> {
    /// `h(x, u, ∇v) = R(x,u) + ∇v(x) f(x,u)`.
    Hamiltonian {
        env: &'a Environment,
        reward: &'a RewardSpec,
        value: &'a Net,
    },
    /// `R(x,u) + ∇v(x) f_c(x,u)`; never touches the drift.
    PartialModelFree {
        env: &'a Environment,
        reward: &'a RewardSpec,
        value: &'a Net,
    },
    /// `â(x, u)` on `[x; u]`.
    Advantage { head: &'a Net },
    /// `q̂(x, u)` on `[x; u]`.
    QFunction { head: &'a Net },
}

fn stack(x: &Vector, u: &Vector) -> Vector {
    let mut z = Vector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

impl ImprovementObjective<'_> {
    pub fn eval(&self, x: &Vector, u: &Vector) -> Result<f64> {
        match self {
            ImprovementObjective::Hamiltonian { env, reward, value } => {
                let g = value.gradient(x)?;
                Ok(reward.reward(x, u)? + (g * env.rhs(x, u))[0])
            }
            ImprovementObjective::PartialModelFree { env, reward, value } => {
                let g = value.gradient(x)?;
                Ok(reward.reward(x, u)? + (g * env.coupling(x, u))[0])
            }
            ImprovementObjective::Advantage { head } | ImprovementObjective::QFunction { head } => {
                head.eval_scalar(&stack(x, u))
            }
        }
    }

    /// `∂J/∂u` at an interior action.
    pub fn grad_u(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        match self {
            ImprovementObjective::Hamiltonian { reward, .. } | ImprovementObjective::PartialModelFree { reward, .. } => {
                Ok(self.coupling_gradient(x, u)? - reward.penalty_gradient(u)?)
            }
            _ => self.head_grad_u(x, u),
        }
    }

    /// `∂J/∂u` at `u = σ(ξ)`. Uses `∇S(σ(ξ)) = ξ`, which stays finite where
    /// `σ(ξ)` rounds onto the boundary.
    fn grad_u_at_sigma(&self, reward: &RewardSpec, x: &Vector, xi: &Vector) -> Result<Vector> {
        let u = reward.action_box().clamp(&reward.sigma(xi));
        match self {
            ImprovementObjective::Hamiltonian { .. } | ImprovementObjective::PartialModelFree { .. } => {
                Ok(self.coupling_gradient(x, &u)? - xi)
            }
            _ => self.head_grad_u(x, &u),
        }
    }

    fn head_grad_u(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        match self {
            ImprovementObjective::Advantage { head } | ImprovementObjective::QFunction { head } => {
                let g = head.gradient(&stack(x, u))?;
                Ok(g.row(0).columns(x.len(), u.len()).transpose())
            }
            _ => unreachable!("head objectives only"),
        }
    }

    /// `∂/∂u ∇v(x) f_c(x, u)`.
    fn coupling_gradient(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        match self {
            ImprovementObjective::Hamiltonian { env, value, .. }
            | ImprovementObjective::PartialModelFree { env, value, .. } => {
                let grad_v = value.gradient(x)?;
                Ok(match env.coupling_matrix(x) {
                    Some(fc) => (grad_v * fc).row(0).transpose(),
                    None => {
                        let h = 1e-6;
                        Vector::from_iterator(
                            u.len(),
                            (0..u.len()).map(|k| {
                                let mut up = u.clone();
                                let mut dn = u.clone();
                                up[k] += h;
                                dn[k] -= h;
                                (&grad_v * (env.coupling(x, &up) - env.coupling(x, &dn)))[0] / (2.0 * h)
                            }),
                        )
                    }
                })
            }
            _ => unreachable!("value-gradient objectives only"),
        }
    }
}

/// Maximizer over a uniform `resolution^m` grid of the box, refined once by
/// golden-section search per coordinate within one cell of the best point.
/// Ties go to the smallest `|u|`, then lexicographically.
pub fn grid_argmax(objective: &ImprovementObjective<'_>, x: &Vector, action_box: &ActionBox, resolution: usize) -> Result<Vector> {
    if !action_box.is_bounded() {
        return Err(IpiError::RequiresClosedForm);
    }
    if resolution < 3 {
        return Err(IpiError::InvalidArgument("grid resolution must be at least 3".into()));
    }
    let m = action_box.dim();
    let lims = action_box.limits();
    let cell: Vec<f64> = lims.iter().map(|l| 2.0 * l / (resolution - 1) as f64).collect();
    let mut idx = vec![0usize; m];
    let mut best: Option<(f64, Vector)> = None;
    loop {
        let u = Vector::from_iterator(m, idx.iter().zip(lims).zip(&cell).map(|((i, l), c)| -l + *i as f64 * c));
        let val = objective.eval(x, &u)?;
        let better = match &best {
            None => true,
            Some((bv, bu)) => val > *bv || (val == *bv && tie_less(&u, bu)),
        };
        if better {
            best = Some((val, u));
        }
        let mut d = m;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < resolution {
                break;
            }
            idx[d] = 0;
        }
        if idx.iter().all(|i| *i == 0) {
            break;
        }
    }
    let (mut best_val, mut best_u) = best.expect("grid is non-empty");
    for k in 0..m {
        let lo = (best_u[k] - cell[k]).max(-lims[k]);
        let hi = (best_u[k] + cell[k]).min(lims[k]);
        let mut probe = best_u.clone();
        let mut f = |t: f64| -> Result<f64> {
            probe[k] = t;
            objective.eval(x, &probe)
        };
        let (t, val) = golden_max(&mut f, lo, hi, 1e-6 * (1.0 + lims[k]))?;
        if val > best_val {
            best_val = val;
            best_u[k] = t;
        }
    }
    Ok(best_u)
}

fn tie_less(a: &Vector, b: &Vector) -> bool {
    let (na, nb) = (a.norm(), b.norm());
    if na != nb {
        return na < nb;
    }
    a.iter().zip(b.iter()).find(|(p, q)| p != q).is_some_and(|(p, q)| p < q)
}

fn golden_max<F>(f: &mut F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, f(t)?))
}

/// Momentum schedule and stopping rule of the RUD optimizer.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RudConfig {
    /// Stop once `‖v‖ < delta`.
    pub delta: f64,
    pub eta0: f64,
    /// Iterations run at the constant rate `eta0`.
    pub warmup: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Abort once `‖v‖` exceeds this.
    pub divergence: f64,
}

impl Default for RudConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            eta0: 1e-3,
            warmup: 30,
            epsilon: 1e-3,
            max_iter: 10_000,
            divergence: 1e6,
        }
    }
}

impl RudConfig {
    /// `η_j`, counting from `j = 1`.
    pub fn eta(&self, j: usize) -> f64 {
        if j <= self.warmup {
            self.eta0
        } else {
            self.eta0 / (j - self.warmup) as f64
        }
    }

    /// `λ_j = (1 - ε)(1 - η_j / η_0)`.
    pub fn lambda(&self, j: usize) -> f64 {
        (1.0 - self.epsilon) * (1.0 - self.eta(j) / self.eta0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RudResult {
    pub theta: Vector,
    pub iterations: usize,
    pub final_norm: f64,
}

/// `v ← λ_j v + η_j ∇J(θ); θ ← θ + v` until `‖v‖ < δ`.
pub fn rud_optimize<G>(grad: G, init: Vector, cfg: &RudConfig) -> Result<RudResult>
where
    G: Fn(&Vector) -> Result<Vector>,
{
    let mut theta = init;
    let mut v = Vector::zeros(theta.len());
    for j in 1..=cfg.max_iter {
        let g = grad(&theta)?;
        v = &v * cfg.lambda(j) + g * cfg.eta(j);
        let norm = v.norm();
        if !norm.is_finite() || norm > cfg.divergence {
            return Err(IpiError::NonConvergence { iterations: j, norm });
        }
        theta += &v;
        if norm < cfg.delta {
            return Ok(RudResult {
                theta,
                iterations: j,
                final_norm: norm,
            });
        }
    }
    Err(IpiError::NonConvergence {
        iterations: cfg.max_iter,
        norm: v.norm(),
    })
}

/// `Σ_k ∂/∂Θ J(x_k, σ(Θ φ(x_k)))`, flattened row-major like `Θ`.
pub fn policy_head_gradient(
    objective: &ImprovementObjective<'_>,
    reward: &RewardSpec,
    basis: &Basis,
    grid: &[Vector],
    theta: &Vector,
    mode: ExecMode,
) -> Result<Vector> {
    let m = reward.action_dim();
    let l = basis.len();
    let w = Matrix::from_row_slice(m, l, theta.as_slice());
    let parts = map_slice(mode, grid, |x| -> Result<Matrix> {
        let phi = basis.features(x)?;
        let xi = &w * &phi;
        let dj_dxi = reward.sigma_jacobian(&xi).transpose() * objective.grad_u_at_sigma(reward, x, &xi)?;
        Ok(dj_dxi * phi.transpose())
    });
    let mut total = Matrix::zeros(m, l);
    for p in parts {
        total += p?;
    }
    let mut flat = Vec::with_capacity(m * l);
    for r in 0..m {
        flat.extend(total.row(r).iter().copied());
    }
    Ok(Vector::from_vec(flat))
}

/// `Σ_k J(x_k, σ(Θ φ(x_k)))`.
pub fn policy_head_objective(
    objective: &ImprovementObjective<'_>,
    reward: &RewardSpec,
    basis: &Basis,
    grid: &[Vector],
    theta: &Vector,
) -> Result<f64> {
    let m = reward.action_dim();
    let w = Matrix::from_row_slice(m, basis.len(), theta.as_slice());
    grid.iter().try_fold(0.0, |acc, x| {
        let u = reward.action_box().clamp(&reward.sigma(&(&w * basis.features(x)?)));
        Ok(acc + objective.eval(x, &u)?)
    })
}
