//! The verification suite behind `ipi verify` and the acceptance tests.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use ipi_core::driver::{
    compare_value_grids, monotonicity_check, run, EnvironmentConfig, IpiConfig, IterationLog, MethodConfig,
};
use ipi_core::dynamics::{simulate, wrap_angle, Environment, LqrEnvironment, OpenLoop};
use ipi_core::funcapprox::{Basis, GridSpec, Net, RbfBasis};
use ipi_core::lqr_oracle::{kleinman, solve_are, stabilizing_gain, z_transform};
use ipi_core::policies::StationaryPolicy;
use ipi_core::policyimp::{grid_argmax, vgb_greedy, ImprovementObjective};
use ipi_core::rewards::{tanh_penalty, RewardSpec};
use ipi_core::rollout::{collect_window, Behavior, Quadrature, WindowStart};
use ipi_core::{IpiError, Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Reported for context; never affects the exit code.
    Info,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub id: &'static str,
    pub status: Status,
    pub metric: String,
    pub tolerance: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Only run checks whose id contains this string.
    pub filter: Option<String>,
    /// Negates the LQR gain update in every LQR run.
    pub inject_gain_sign_bug: bool,
    /// Adds a run of IQPI in its κ-less tabulated form.
    pub iqpi_table_literal: bool,
}

pub const CHECK_IDS: [&str; 9] = [
    "c1-lqr-convergence",
    "c2-monotone-improvement",
    "c3-quadratic-rate",
    "c4-onoff-equivalence",
    "c5-ad-identities",
    "c6-pendulum-swingup",
    "c7-value-consistency",
    "c8-penalty-closed-form",
    "c9-numerics",
];

struct Outcome {
    pass: bool,
    metric: String,
}

fn outcome(pass: bool, metric: String) -> Outcome {
    Outcome { pass, metric }
}

fn failed(e: impl fmt::Display) -> Outcome {
    outcome(false, format!("error: {e}"))
}

fn timed(id: &'static str, tolerance: &str, f: impl FnOnce() -> Outcome) -> CheckResult {
    let started = Instant::now();
    let o = f();
    CheckResult {
        id,
        status: if o.pass { Status::Pass } else { Status::Fail },
        metric: o.metric,
        tolerance: tolerance.to_string(),
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn info(id: &'static str, metric: String, seconds: f64) -> CheckResult {
    CheckResult {
        id,
        status: Status::Info,
        metric,
        tolerance: "-".into(),
        seconds,
    }
}

// LQR runs

fn scalar_env() -> LqrEnvironment {
    let one = Matrix::identity(1, 1);
    LqrEnvironment::new(one.clone(), one.clone(), one.clone(), one).expect("scalar LQR")
}

fn scalar_config(method: MethodConfig, opts: &VerifyOptions) -> IpiConfig {
    let mut cfg = IpiConfig::lqr_scalar(method);
    cfg.run.gain_sign_bug = opts.inject_gain_sign_bug;
    cfg
}

/// Kleinman `(K_i, P_i)` for the scalar instance from `K_0 = -0.5`.
fn scalar_oracle() -> Result<Vec<(Matrix, Matrix)>, IpiError> {
    let zs = z_transform(&scalar_env(), (-2.0f64).exp())?;
    kleinman(&zs, &Matrix::from_element(1, 1, -0.5), 1e-14, 30)
}

fn p_values(log: &IterationLog) -> Vec<f64> {
    log.records
        .iter()
        .map(|r| r.lqr.as_ref().map(|l| l.p[(0, 0)]).unwrap_or(f64::NAN))
        .collect()
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Seeded two-state, single-input instance with an unstable drift. Draws
/// whose stabilizer starts from a value larger than 100 are skipped, so
/// that the relative stopping rule stays above the sampling noise.
pub fn seeded_lqr(seed: u64) -> IpiConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut draw = |n, m| Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let a = draw(2, 2) + Matrix::identity(2, 2) * 0.5;
        let b = draw(2, 1);
        let c = Matrix::identity(2, 2);
        let Ok(lqr) = LqrEnvironment::new(a.clone(), b.clone(), c.clone(), Matrix::identity(1, 1)) else {
            continue;
        };
        let discount = 0.5;
        let Ok(zs) = z_transform(&lqr, discount) else { continue };
        let Ok(k0) = stabilizing_gain(&zs) else { continue };
        match kleinman(&zs, &k0, 0.0, 1) {
            Ok(seq) if seq[0].1.amax() <= 100.0 => {}
            _ => continue,
        }
        let mut cfg = IpiConfig::lqr_scalar(MethodConfig::Lqr);
        cfg.environment = EnvironmentConfig::Lqr {
            a: rows(&a),
            b: rows(&b),
            c: rows(&c),
            gamma_mat: None,
        };
        cfg.reward.discount = discount;
        cfg.run.initial_gain = Some(rows(&k0));
        return cfg;
    }
}

fn check_convergence(opts: &VerifyOptions) -> Outcome {
    let p_star = match z_transform(&scalar_env(), (-2.0f64).exp()).and_then(|zs| solve_are(&zs)) {
        Ok(p) => p[(0, 0)],
        Err(e) => return failed(e),
    };
    let log = match run(&scalar_config(MethodConfig::Lqr, opts)) {
        Ok(l) => l,
        Err(e) => return failed(e),
    };
    let ps = p_values(&log);
    let errors: Vec<f64> = ps.iter().map(|p| (p - p_star).abs()).collect();
    let hit = errors.iter().position(|e| *e < 1e-6);
    let last = *errors.last().unwrap_or(&f64::INFINITY);
    let pass = (p_star + 1.0).abs() < 1e-12
        && (ps[0] + 1.25).abs() < 1e-6
        && hit.is_some_and(|i| i < 8)
        && last < 1e-6
        && log.converged;
    let reached = hit.map(|i| format!("iteration {i}")).unwrap_or_else(|| "never".into());
    outcome(
        pass,
        format!("|P-P*| < 1e-6 at {reached}, final |P-P*| = {last:.1e}, P0 = {:.6}", ps[0]),
    )
}

fn check_monotone(opts: &VerifyOptions) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for cfg in [scalar_config(MethodConfig::Lqr, opts), {
        let mut c = seeded_lqr(7);
        c.run.gain_sign_bug = opts.inject_gain_sign_bug;
        c
    }] {
        match run(&cfg) {
            Ok(log) => {
                let r = monotonicity_check(&log, 1e-9);
                violations += r.violations;
                worst = worst.min(r.min_psd_eigenvalue.unwrap_or(f64::INFINITY));
            }
            Err(e) => return failed(e),
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations, min eig(P_i+1 - P_i) = {worst:.2e}"),
    )
}

fn check_quadratic_rate(opts: &VerifyOptions) -> Outcome {
    let log = match run(&scalar_config(MethodConfig::Lqr, opts)) {
        Ok(l) => l,
        Err(e) => return failed(e),
    };
    let e: Vec<f64> = p_values(&log).iter().map(|p| (p + 1.0).abs()).collect();
    let ratios: Vec<f64> = e
        .windows(2)
        .filter(|w| (1e-6..=1e-1).contains(&w[0]))
        .map(|w| w[1] / (w[0] * w[0]))
        .collect();
    if ratios.len() < 2 {
        return outcome(false, format!("only {} ratios in range; errors {e:?}", ratios.len()));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
    outcome(
        mean > 0.0 && spread <= 0.5,
        format!("e_i+1/e_i^2 = {ratios:.4?}, max deviation {:.1}%", spread * 100.0),
    )
}

fn off_policy_methods() -> Vec<MethodConfig> {
    vec![
        MethodConfig::Iepi,
        MethodConfig::Iapi { constraint_weight: 1.0 },
        MethodConfig::Iqpi {
            beta: 1.0,
            kappa: None,
            table_literal: false,
        },
        MethodConfig::Icpi { probes: None },
    ]
}

fn check_equivalence(opts: &VerifyOptions) -> Outcome {
    let reference = match run(&scalar_config(MethodConfig::OnPolicy, opts)) {
        Ok(l) => p_values(&l),
        Err(e) => return failed(e),
    };
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for m in off_policy_methods() {
        let name = m.name();
        let ps = match run(&scalar_config(m, opts)) {
            Ok(l) => p_values(&l),
            Err(e) => return failed(format!("{name}: {e}")),
        };
        if ps.len() != reference.len() {
            return outcome(false, format!("{name} ran {} iterations vs {}", ps.len(), reference.len()));
        }
        let d = ps.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        parts.push(format!("{name} {d:.1e}"));
        worst = worst.max(d);
    }
    outcome(worst < 1e-6, format!("max |P_i - P_i(on)| = {worst:.1e} ({})", parts.join(", ")))
}

fn table_literal_iqpi() -> String {
    let cfg = IpiConfig::lqr_scalar(MethodConfig::Iqpi {
        beta: 1.0,
        kappa: None,
        table_literal: true,
    });
    let at_start = match run(&cfg) {
        Ok(l) => format!("P0 = {:.6} (on-policy -1.25)", p_values(&l)[0]),
        Err(e) => format!("K0 = -0.5: {e}"),
    };
    let mut shifted = cfg.clone();
    shifted.run.initial_gain = Some(vec![vec![-0.75]]);
    shifted.run.max_iter = 1;
    let off = match run(&shifted) {
        Ok(l) => format!("K0 = -0.75: P0 = {:.6} vs {:.6}", p_values(&l)[0], -(1.0 + 0.5625) / 1.5),
        Err(e) => format!("K0 = -0.75: {e}"),
    };
    format!("expected divergence of the kappa-less form; {at_start}; {off}")
}

fn check_ad_identities(opts: &VerifyOptions) -> Outcome {
    let oracle = match scalar_oracle() {
        Ok(o) => o,
        Err(e) => return failed(e),
    };
    let grid: Vec<Vector> = (0..20).map(|j| Vector::from_element(1, -1.0 + 2.0 * j as f64 / 19.0)).collect();
    let actions: Vec<Vector> = (0..5).map(|j| Vector::from_element(1, -2.0 + j as f64)).collect();
    let kappa1 = 2.0;
    let (mut a_worst, mut q_worst, mut c_worst) = (0.0f64, 0.0f64, 0.0f64);
    for m in off_policy_methods().into_iter().skip(1) {
        let name = m.name();
        let log = match run(&scalar_config(m, opts)) {
            Ok(l) => l,
            Err(e) => return failed(format!("{name}: {e}")),
        };
        for (rec, (_, p_ref)) in log.records.iter().zip(&oracle) {
            let ev = &rec.evaluation;
            let p = p_ref[(0, 0)];
            let pol = &ev.policy;
            let res: Result<(), IpiError> = (|| {
                match name {
                    "iapi" => {
                        let mut scale = 0.0f64;
                        for x in &grid {
                            for u in &actions {
                                scale = scale.max(ev.ad_at(x, u)?.abs());
                            }
                        }
                        for x in &grid {
                            let e = ev.ad_at(x, &pol.eval(x))?.abs() / scale.max(1e-300);
                            a_worst = a_worst.max(e);
                        }
                    }
                    "iqpi" => {
                        for x in &grid {
                            let q = ev.ad_at(x, &pol.eval(x))?;
                            q_worst = q_worst.max((kappa1 * p * x[0] * x[0] - q).abs());
                        }
                    }
                    _ => {
                        let c = ev.cfun.as_ref().expect("ICPI has a c-head");
                        for x in &grid {
                            c_worst = c_worst.max((c.eval(x)?[0] - 2.0 * p * x[0]).abs());
                        }
                    }
                }
                Ok(())
            })();
            if let Err(e) = res {
                return failed(format!("{name}: {e}"));
            }
        }
    }
    outcome(
        a_worst < 1e-6 && q_worst < 1e-6 && c_worst < 1e-6,
        format!("|a(x,pi)|/scale {a_worst:.1e}, |k1 v - q(x,pi)| {q_worst:.1e}, |c - 2BPx| {c_worst:.1e}"),
    )
}

// pendulum runs

/// Start of the swing-up test.
pub fn swingup_start() -> Vector {
    Vector::from_vec(vec![1.1 * PI, 0.0])
}

/// Worst `(|wrap θ|, |θ'|)` over `t ∈ [5, 6]` under `policy`.
pub fn settle_error(policy: &StationaryPolicy) -> Result<(f64, f64), IpiError> {
    let env = Environment::pendulum(5.0)?;
    let h = 1e-3;
    let traj = simulate(&env, policy, &swingup_start(), 0.0, 6.0, h)?;
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= 5.0 - 1e-9)
        .fold((0.0f64, 0.0f64), |acc, (_, x)| (acc.0.max(wrap_angle(x[0]).abs()), acc.1.max(x[1].abs()))))
}

/// The desk preset used for the swing-up and consistency checks.
pub fn pendulum_config(method: MethodConfig) -> IpiConfig {
    IpiConfig::pendulum_desk(method)
}

struct PendulumRuns {
    iepi: Result<IterationLog, IpiError>,
    icpi: Result<IterationLog, IpiError>,
    seconds: f64,
}

fn pendulum_runs() -> PendulumRuns {
    let started = Instant::now();
    let iepi = run(&pendulum_config(MethodConfig::Iepi));
    let icpi = run(&pendulum_config(MethodConfig::Icpi { probes: None }));
    PendulumRuns {
        iepi,
        icpi,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn check_swingup(runs: &PendulumRuns) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, log) in [("iepi", &runs.iepi), ("icpi", &runs.icpi)] {
        match log.as_ref().map_err(|e| e.clone()).and_then(|l| settle_error(&l.final_policy)) {
            Ok((th, om)) => {
                pass &= th < 0.2 && om < 0.5;
                parts.push(format!("{name} |theta| {th:.3} |theta'| {om:.3}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name} error: {e}"));
            }
        }
    }
    outcome(pass, parts.join(", "))
}

fn reduced_preset() -> String {
    let mut parts = Vec::new();
    for (method, states) in [(MethodConfig::Iepi, vec![9, 8]), (MethodConfig::Icpi { probes: None }, vec![9, 8])] {
        let name = method.name();
        let mut cfg = pendulum_config(method);
        cfg.rbf.value = vec![9, 9];
        cfg.sampling.states = Some(states);
        cfg.sampling.grid = Some(vec![9, 9]);
        cfg.run.diagnostic_grid = Some(vec![11, 11]);
        match run(&cfg).and_then(|l| settle_error(&l.final_policy)) {
            Ok((th, om)) => parts.push(format!("{name} |theta| {th:.3} |theta'| {om:.3}")),
            Err(e) => parts.push(format!("{name}: {e}")),
        }
    }
    format!("9x9 features, 72 starts: {}", parts.join("; "))
}

fn check_consistency(runs: &PendulumRuns) -> Outcome {
    let (Ok(a), Ok(b)) = (&runs.iepi, &runs.icpi) else {
        return outcome(false, "pendulum runs failed".into());
    };
    let (Some(ra), Some(rb)) = (a.records.last(), b.records.last()) else {
        return outcome(false, "empty run".into());
    };
    match compare_value_grids(&ra.value_samples, &rb.value_samples, 0.15) {
        Ok(c) => outcome(
            c.within >= 0.9,
            format!(
                "{:.1}% of {} points within 15% (max rel {:.2}, mean rel {:.3})",
                c.within * 100.0,
                ra.value_samples.len(),
                c.max_rel,
                c.mean_rel
            ),
        ),
        Err(e) => failed(e),
    }
}

// closed forms etc.

fn check_penalty() -> Outcome {
    let reward = match RewardSpec::pendulum(5.0, 0.1) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let mut boundary = 0.0f64;
    for u in [-5.0, 5.0] {
        match reward.action_penalty(&Vector::from_element(1, u)) {
            Ok(s) => boundary = boundary.max((s - 17.3287).abs()),
            Err(e) => return failed(e),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut quad = 0.0f64;
    for _ in 0..100 {
        let u: f64 = rng.random_range(-5.0..5.0);
        let s = reward.penalty_by_quadrature(&Vector::from_element(1, u));
        quad = quad.max((s - tanh_penalty(u, 5.0)).abs());
    }
    outcome(
        boundary <= 1e-3 && quad < 1e-8,
        format!("|S(+-5) - 17.3287| = {boundary:.1e}, quadrature vs closed form {quad:.1e}"),
    )
}

fn rbf_gradient_error() -> Result<f64, IpiError> {
    let grid = GridSpec::pendulum_states(13)?;
    let basis = Arc::new(Basis::Rbf(RbfBasis::on_grid(&grid, vec![1.0, 0.5], true)?));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let w = Matrix::from_fn(1, basis.len(), |_, _| rng.random_range(-1.0..1.0));
        let net = Net::new(basis.clone(), w)?;
        let x = Vector::from_vec(vec![rng.random_range(-3.0..3.0), rng.random_range(-6.0..6.0)]);
        let g = net.gradient(&x)?;
        let h = 1e-5;
        for d in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[d] += h;
            xm[d] -= h;
            let fd = (net.eval_scalar(&xp)? - net.eval_scalar(&xm)?) / (2.0 * h);
            worst = worst.max((fd - g[(0, d)]).abs());
        }
    }
    Ok(worst)
}

fn bellman_form_error() -> Result<f64, IpiError> {
    let one = Matrix::identity(1, 1);
    let env = Environment::from_lqr(&scalar_env())?;
    let reward = RewardSpec::lqr(one.clone(), one, (-2.0f64).exp())?;
    let gamma = reward.discount;
    let pi = StationaryPolicy::Linear(Matrix::from_element(1, 1, -0.5));
    let value = |s: &Vector| -1.25 * s[0] * s[0];
    let mut worst = 0.0f64;
    for j in 0..20 {
        let x = Vector::from_element(1, -2.0 + 4.0 * j as f64 / 19.0);
        let start = WindowStart { x: x.clone(), u: None };
        let w = collect_window(&env, &Behavior::Stationary(pi.clone()), &start, 0.01, 1e-5)?;
        let reward_at = |s: &Vector, _u: &Vector| -> Vector {
            Vector::from_element(1, reward.reward(s, &pi.eval(s)).unwrap_or(f64::NAN))
        };
        let integral = w.integral(gamma, Quadrature::Composite, reward_at)?[0];
        let integral_form = value(&x) - (integral + gamma.powf(0.01) * value(w.last_state()));
        let u = pi.eval(&x);
        let hamiltonian = reward.reward(&x, &u)? + (-2.5 * x[0]) * env.rhs(&x, &u)[0];
        let infinitesimal_form = -gamma.ln() * value(&x) - hamiltonian;
        worst = worst.max(integral_form.abs()).max(infinitesimal_form.abs());
    }
    Ok(worst)
}

fn rk4_ratio() -> Result<f64, IpiError> {
    let env = Environment::pendulum(5.0)?;
    let x0 = Vector::from_vec(vec![1.1 * PI, 0.5]);
    let zero = OpenLoop(|_t: f64| Vector::zeros(1));
    let reference = simulate(&env, &zero, &x0, 0.0, 1.0, 1e-5)?;
    let err = |h: f64| -> Result<f64, IpiError> {
        let t = simulate(&env, &zero, &x0, 0.0, 1.0, h)?;
        Ok((t.last_state() - reference.last_state()).amax())
    };
    Ok(err(0.02)? / err(0.01)?)
}

fn argmax_error() -> Result<f64, IpiError> {
    let env = Environment::pendulum(5.0)?;
    let reward = RewardSpec::pendulum(5.0, 0.1)?;
    let basis = Arc::new(Basis::Rbf(RbfBasis::on_grid(&GridSpec::pendulum_states(5)?, vec![1.0, 0.5], true)?));
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = Matrix::from_fn(1, basis.len(), |_, _| rng.random_range(-20.0..20.0));
        let value = Net::new(basis.clone(), w)?;
        let x = Vector::from_vec(vec![rng.random_range(-3.1..3.1), rng.random_range(-6.0..6.0)]);
        let obj = ImprovementObjective::Hamiltonian {
            env: &env,
            reward: &reward,
            value: &value,
        };
        let g = grid_argmax(&obj, &x, reward.action_box(), 101)?;
        let c = vgb_greedy(&env, &reward, &value, &x)?;
        worst = worst.max((g[0] - c[0]).abs());
    }
    Ok(worst)
}

fn check_numerics() -> Outcome {
    let parts = (|| -> Result<(f64, f64, f64, f64), IpiError> {
        Ok((rbf_gradient_error()?, bellman_form_error()?, rk4_ratio()?, argmax_error()?))
    })();
    match parts {
        Ok((rbf, bellman, ratio, argmax)) => outcome(
            rbf < 1e-6 && bellman < 1e-6 && (8.0..=32.0).contains(&ratio) && argmax < 0.02,
            format!("rbf fd {rbf:.1e}, bellman forms {bellman:.1e}, rk4 ratio {ratio:.2}, argmax vs vgb {argmax:.1e}"),
        ),
        Err(e) => failed(e),
    }
}

// driver

fn selected(opts: &VerifyOptions, id: &str) -> bool {
    opts.filter.as_deref().is_none_or(|f| id.contains(f))
}

/// Runs the selected checks, reporting each as soon as it finishes.
pub fn run_checks_with(opts: &VerifyOptions, mut report: impl FnMut(&CheckResult)) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |r: CheckResult| {
        report(&r);
        out.push(r);
    };
    if selected(opts, CHECK_IDS[0]) {
        push(timed(CHECK_IDS[0], "|P-P*| < 1e-6 within 8 iterations", || check_convergence(opts)));
    }
    if selected(opts, CHECK_IDS[1]) {
        push(timed(CHECK_IDS[1], "eig >= -1e-9", || check_monotone(opts)));
    }
    if selected(opts, CHECK_IDS[2]) {
        push(timed(CHECK_IDS[2], "within +-50% of the mean", || check_quadratic_rate(opts)));
    }
    if selected(opts, CHECK_IDS[3]) {
        push(timed(CHECK_IDS[3], "< 1e-6", || check_equivalence(opts)));
        if opts.iqpi_table_literal {
            let started = Instant::now();
            let metric = table_literal_iqpi();
            push(info("c4-iqpi-table-literal", metric, started.elapsed().as_secs_f64()));
        }
    }
    if selected(opts, CHECK_IDS[4]) {
        push(timed(CHECK_IDS[4], "< 1e-6", || check_ad_identities(opts)));
    }
    let want6 = selected(opts, CHECK_IDS[5]);
    let want7 = selected(opts, CHECK_IDS[6]);
    if want6 || want7 {
        let runs = pendulum_runs();
        if want6 {
            let mut r = timed(CHECK_IDS[5], "|theta| < 0.2, |theta'| < 0.5 on [5, 6] s", || check_swingup(&runs));
            r.seconds += runs.seconds;
            push(r);
            let started = Instant::now();
            let metric = reduced_preset();
            push(info("c6-reduced-features", metric, started.elapsed().as_secs_f64()));
        }
        if want7 {
            push(timed(CHECK_IDS[6], ">= 90% within 15%", || check_consistency(&runs)));
        }
    }
    if selected(opts, CHECK_IDS[7]) {
        push(timed(CHECK_IDS[7], "1e-3 and 1e-8", check_penalty));
    }
    if selected(opts, CHECK_IDS[8]) {
        push(timed(CHECK_IDS[8], "1e-6, 1e-6, [8, 32], 0.02", check_numerics));
    }
    out
}

pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckResult> {
    run_checks_with(opts, |_| {})
}

pub fn format_row(r: &CheckResult) -> String {
    format!(
        "{:<24} {:<5} {:>7.2}s  {}  [tol {}]",
        r.id, r.status, r.seconds, r.metric, r.tolerance
    )
}

pub fn header() -> String {
    format!("{:<24} {:<5} {:>8}  metric  [tolerance]", "check", "status", "time")
}

pub fn print_table(results: &[CheckResult], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{}", header())?;
    for r in results {
        writeln!(w, "{}", format_row(r))?;
    }
    Ok(())
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.status != Status::Fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_selects_by_substring() {
        let opts = VerifyOptions {
            filter: Some("c8".into()),
            ..VerifyOptions::default()
        };
        let results = run_checks(&opts);
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].id, "c8-penalty-closed-form");
        assert_eq!(results[0].status, Status::Pass);
    }

    #[test]
    fn sign_bug_fails_the_convergence_check() {
        let opts = VerifyOptions {
            filter: Some("c1".into()),
            inject_gain_sign_bug: true,
            ..VerifyOptions::default()
        };
        let results = run_checks(&opts);
        assert_eq!(results[0].status, Status::Fail);
        assert!(!all_passed(&results));
    }

    #[test]
    fn seeded_instance_is_reproducible() {
        assert_eq!(seeded_lqr(7), seeded_lqr(7));
        assert_ne!(seeded_lqr(7), seeded_lqr(8));
    }

    #[test]
    fn info_rows_do_not_fail_the_suite() {
        let rows = vec![info("x", "diverged".into(), 0.0)];
        assert!(all_passed(&rows));
        let mut buf = Vec::new();
        print_table(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("INFO"));
    }
}
