//! Ground truth for discounted LQR: the Z-system, Lyapunov evaluation of
//! linear policies and a Kleinman Riccati solver.
//!
//! Everything is in the maximization convention used by the learners:
//! values are `xᵀPx` with `P ≤ 0`. This module shares no code with the
//! sampling-based evaluation path.

use crate::dynamics::LqrEnvironment;
use crate::{IpiError, Matrix, Result};

/// `Ż = Ā Z + B U` with `Ā = A + (ln γ / 2) I`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZSystem {
    pub a_bar: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub gamma_mat: Matrix,
}

pub fn z_transform(env: &LqrEnvironment, discount: f64) -> Result<ZSystem> {
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(IpiError::InvalidArgument(format!("discount factor must lie in (0, 1], got {discount}")));
    }
    let n = env.state_dim();
    let a_bar = if discount == 1.0 {
        env.a.clone()
    } else {
        &env.a + Matrix::identity(n, n) * (0.5 * discount.ln())
    };
    Ok(ZSystem {
        a_bar,
        b: env.b.clone(),
        c: env.c.clone(),
        gamma_mat: env.gamma_mat.clone(),
    })
}

/// Largest real part of the eigenvalues.
pub fn spectral_abscissa(m: &Matrix) -> f64 {
    m.complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `Acᵀ P + P Ac = Q` by Kronecker vectorization.
pub fn solve_lyapunov(ac: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = ac.nrows();
    let eye = Matrix::identity(n, n);
    let act = ac.transpose();
    let op = eye.kronecker(&act) + act.kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or(IpiError::IllConditioned { condition: f64::INFINITY })?;
    let p = Matrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Value matrix `P_K` of `u = K z` on the Z-system:
/// `(Ā + BK)ᵀP + P(Ā + BK) = CᵀC + KᵀΓK`.
pub fn lyapunov_eval(zs: &ZSystem, k: &Matrix) -> Result<Matrix> {
    let ac = &zs.a_bar + &zs.b * k;
    let abscissa = spectral_abscissa(&ac);
    if abscissa >= 0.0 {
        return Err(IpiError::Inadmissible { abscissa });
    }
    let q = zs.c.transpose() * &zs.c + k.transpose() * &zs.gamma_mat * k;
    solve_lyapunov(&ac, &q)
}

/// `K = Γ⁻¹ Bᵀ P`.
pub fn greedy_gain(zs: &ZSystem, p: &Matrix) -> Result<Matrix> {
    let chol = zs
        .gamma_mat
        .clone()
        .cholesky()
        .ok_or_else(|| IpiError::InvalidArgument("Γ must be positive definite".into()))?;
    Ok(chol.solve(&(zs.b.transpose() * p)))
}

/// `‖ĀᵀP + PĀ + PBΓ⁻¹BᵀP - CᵀC‖_F`.
pub fn are_residual(zs: &ZSystem, p: &Matrix) -> f64 {
    let g_inv = zs.gamma_mat.clone().try_inverse().expect("Γ invertible");
    let r = zs.a_bar.transpose() * p + p * &zs.a_bar + p * &zs.b * g_inv * zs.b.transpose() * p
        - zs.c.transpose() * &zs.c;
    r.norm()
}

/// Stabilizing gain for the Z-system: zero when `Ā` is already Hurwitz,
/// else Bass's construction `K = -BᵀW⁻¹` with
/// `(Ā + αI)W + W(Ā + αI)ᵀ = 2BBᵀ`.
pub fn stabilizing_gain(zs: &ZSystem) -> Result<Matrix> {
    let n = zs.a_bar.nrows();
    let m = zs.b.ncols();
    if spectral_abscissa(&zs.a_bar) < 0.0 {
        return Ok(Matrix::zeros(m, n));
    }
    let mut alpha = zs.a_bar.norm() + 1.0;
    for _ in 0..8 {
        let shifted = &zs.a_bar + Matrix::identity(n, n) * alpha;
        // solve_lyapunov takes Acᵀ P + P Ac, so pass the transpose.
        if let Ok(w) = solve_lyapunov(&shifted.transpose(), &(&zs.b * zs.b.transpose() * 2.0)) {
            if let Some(w_inv) = w.try_inverse() {
                let k = -(zs.b.transpose() * w_inv);
                if spectral_abscissa(&(&zs.a_bar + &zs.b * &k)) < 0.0 {
                    return Ok(k);
                }
            }
        }
        alpha *= 2.0;
    }
    Err(IpiError::NeedsStabilizer)
}

/// Kleinman iterates `(K_k, P_k)` starting from `k0`, until the change in
/// `P` drops below `tol` or `max_iter` is hit.
pub fn kleinman(zs: &ZSystem, k0: &Matrix, tol: f64, max_iter: usize) -> Result<Vec<(Matrix, Matrix)>> {
    let mut k = k0.clone();
    let mut out: Vec<(Matrix, Matrix)> = Vec::new();
    for _ in 0..max_iter {
        let p = lyapunov_eval(zs, &k)?;
        let done = out.last().is_some_and(|(_, prev)| (&p - prev).amax() <= tol);
        let next = greedy_gain(zs, &p)?;
        out.push((k, p));
        if done {
            return Ok(out);
        }
        k = next;
    }
    Ok(out)
}

/// Stabilizing solution `P* ≤ 0` of `ĀᵀP + PĀ + PBΓ⁻¹BᵀP - CᵀC = 0`.
pub fn solve_are(zs: &ZSystem) -> Result<Matrix> {
    solve_are_from(zs, &stabilizing_gain(zs)?)
}

pub fn solve_are_from(zs: &ZSystem, k0: &Matrix) -> Result<Matrix> {
    let iterates = kleinman(zs, k0, 1e-14, 100)?;
    let (_, p) = iterates.last().expect("at least one iterate");
    let scale = 1.0 + p.amax();
    if are_residual(zs, p) > 1e-9 * scale * scale {
        return Err(IpiError::NonConvergence {
            iterations: iterates.len(),
            norm: are_residual(zs, p),
        });
    }
    Ok(p.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(a: f64, c: f64, discount: f64) -> ZSystem {
        let one = Matrix::from_element(1, 1, 1.0);
        let env = LqrEnvironment::new_unchecked(Matrix::from_element(1, 1, a), one.clone(), Matrix::from_element(1, 1, c), one)
            .unwrap();
        z_transform(&env, discount).unwrap()
    }

    fn s(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    #[test]
    fn z_transform_examples() {
        assert!(scalar(1.0, 1.0, (-2.0f64).exp()).a_bar[(0, 0)].abs() < 1e-15);
        assert_eq!(scalar(0.7, 1.0, 1.0).a_bar[(0, 0)], 0.7);
        assert!((scalar(0.0, 1.0, 0.1).a_bar[(0, 0)] + 1.151_292_546_497_023).abs() < 1e-12);
        let one = Matrix::from_element(1, 1, 1.0);
        let env = LqrEnvironment::new(one.clone(), one.clone(), one.clone(), one).unwrap();
        assert!(z_transform(&env, 0.0).is_err());
        assert!(z_transform(&env, -1.0).is_err());
    }

    #[test]
    fn scalar_lyapunov_values() {
        let zs = scalar(1.0, 1.0, (-2.0f64).exp());
        assert!((lyapunov_eval(&zs, &s(-0.5)).unwrap()[(0, 0)] + 1.25).abs() < 1e-12);
        assert!((lyapunov_eval(&zs, &s(-1.0)).unwrap()[(0, 0)] + 1.0).abs() < 1e-12);
        assert!(matches!(lyapunov_eval(&zs, &s(0.5)), Err(IpiError::Inadmissible { .. })));
    }

    #[test]
    fn scalar_kleinman_sequence() {
        let zs = scalar(1.0, 1.0, (-2.0f64).exp());
        let it = kleinman(&zs, &s(-0.5), 1e-15, 8).unwrap();
        assert!((it[1].0[(0, 0)] + 1.25).abs() < 1e-12);
        assert!((it[1].1[(0, 0)] + 1.025).abs() < 1e-12);
        let e: Vec<f64> = it.iter().map(|(_, p)| -1.0 - p[(0, 0)]).map(f64::abs).collect();
        // e_{k+1} = e_k² / (2(1 + e_k)).
        for w in e.windows(2).take(3) {
            assert!((w[1] - w[0] * w[0] / (2.0 * (1.0 + w[0]))).abs() < 1e-12);
        }
        let p = solve_are(&zs).unwrap();
        assert!((p[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((greedy_gain(&zs, &p).unwrap()[(0, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_state_cost_gives_zero_value() {
        let zs = scalar(-1.0, 0.0, 1.0);
        assert!(solve_are(&zs).unwrap().amax() < 1e-14);
    }

    #[test]
    fn unstable_instance_gets_a_stabilizer() {
        let one = Matrix::from_element(1, 1, 1.0);
        let env = LqrEnvironment::new(
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.5]),
            Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
            Matrix::identity(2, 2),
            one,
        )
        .unwrap();
        let zs = z_transform(&env, 0.9).unwrap();
        let k = stabilizing_gain(&zs).unwrap();
        assert!(spectral_abscissa(&(&zs.a_bar + &zs.b * &k)) < 0.0);
        let p = solve_are(&zs).unwrap();
        assert!(are_residual(&zs, &p) < 1e-10);
        assert!(p.symmetric_eigen().eigenvalues.max() <= 1e-12);
    }

    #[test]
    fn uncontrollable_unstable_needs_stabilizer() {
        let zs = ZSystem {
            a_bar: Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            b: Matrix::from_column_slice(2, 1, &[1.0, 0.0]),
            c: Matrix::identity(2, 2),
            gamma_mat: Matrix::identity(1, 1),
        };
        assert_eq!(stabilizing_gain(&zs), Err(IpiError::NeedsStabilizer));
    }

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn random_two_by_two_are(seed in 0u64..10_000) {
            let mut r = lcg(seed);
            let a = Matrix::from_fn(2, 2, |_, _| 2.0 * r());
            let b = Matrix::from_fn(2, 1, |_, _| r() + if r() > 0.0 { 1.5 } else { -1.5 });
            let env = LqrEnvironment::new(a, b, Matrix::identity(2, 2), Matrix::identity(1, 1));
            prop_assume!(env.is_ok());
            let zs = z_transform(&env.unwrap(), 0.5).unwrap();
            let k0 = stabilizing_gain(&zs).unwrap();
            let it = kleinman(&zs, &k0, 1e-13, 60).unwrap();
            // Nearly uncontrollable draws have |P| ~ 1e6 and the Kronecker
            // solve loses the digits the monotonicity check looks at.
            prop_assume!(it.last().unwrap().1.amax() < 1e4);
            for w in it.windows(2) {
                let diff = &w[1].1 - &w[0].1;
                prop_assert!(diff.symmetric_eigen().eigenvalues.min() >= -1e-9 * (1.0 + w[0].1.amax()));
            }
            let p = &it.last().unwrap().1;
            prop_assert!(are_residual(&zs, p) < 1e-10 * (1.0 + p.amax()).powi(2));
            let k = greedy_gain(&zs, p).unwrap();
            prop_assert!(spectral_abscissa(&(&zs.a_bar + &zs.b * k)) < 0.0);
        }
    }
}
