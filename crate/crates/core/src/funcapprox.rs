//! Linear-in-parameter approximators `φᵀ(z̄)θ`: Gaussian RBF networks on
//! uniform center grids plus quadratic and linear monomial bases for the
//! LQR case.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::wrap_angle;
use crate::{IpiError, Matrix, Result, Vector};

/// Uniform grid over a box; the last coordinate varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ranges: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(ranges: Vec<(f64, f64)>, counts: Vec<usize>) -> Result<Self> {
        if ranges.is_empty() || ranges.len() != counts.len() {
            return Err(IpiError::InvalidArgument("grid needs one count per range".into()));
        }
        if counts.iter().any(|c| *c < 2) {
            return Err(IpiError::InvalidArgument("grid counts must be at least 2".into()));
        }
        if ranges.iter().any(|(a, b)| !a.is_finite() || !b.is_finite() || b <= a) {
            return Err(IpiError::InvalidArgument("grid ranges must be finite and non-empty".into()));
        }
        Ok(Self { ranges, counts })
    }

    /// Pendulum state region `[-π, π] x [-6, 6]` with `n x n` points.
    pub fn pendulum_states(n: usize) -> Result<Self> {
        Self::new(vec![(-PI, PI), (-6.0, 6.0)], vec![n, n])
    }

    /// Pendulum state-action region `[-π, π] x [-6, 6] x [-u_max, u_max]`.
    pub fn pendulum_state_actions(n: usize, u_max: f64) -> Result<Self> {
        Self::new(vec![(-PI, PI), (-6.0, 6.0), (-u_max, u_max)], vec![n, n, n])
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid coordinates along one axis.
    pub fn axis(&self, d: usize) -> Vec<f64> {
        let (a, b) = self.ranges[d];
        let n = self.counts[d];
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn points(&self) -> Vec<Vector> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|d| self.axis(d)).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; self.dim()];
        loop {
            out.push(Vector::from_iterator(self.dim(), idx.iter().enumerate().map(|(d, i)| axes[d][*i])));
            let mut d = self.dim();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// Wraps the angle coordinate into `[-π, π]`; `±π` both go to `+π`.
pub fn normalize_state(x: &Vector) -> Vector {
    let mut out = x.clone();
    if !out.is_empty() {
        out[0] = wrap_angle(out[0]);
    }
    out
}

/// Gaussian RBF features `exp(-(z - z_j)ᵀ Σ (z - z_j))`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfBasis {
    /// One center per column.
    centers: Matrix,
    sigma_diag: Vec<f64>,
    angle_wrap: bool,
}

impl RbfBasis {
    pub fn new(centers: Vec<Vector>, sigma_diag: Vec<f64>, angle_wrap: bool) -> Result<Self> {
        let dim = sigma_diag.len();
        if dim == 0 || centers.is_empty() {
            return Err(IpiError::InvalidArgument("RBF basis needs centers and widths".into()));
        }
        if sigma_diag.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(IpiError::InvalidArgument("RBF widths must be positive".into()));
        }
        if centers.iter().any(|c| c.len() != dim) {
            return Err(IpiError::InvalidArgument("center dimension does not match widths".into()));
        }
        Ok(Self {
            centers: Matrix::from_columns(&centers),
            sigma_diag,
            angle_wrap,
        })
    }

    pub fn on_grid(grid: &GridSpec, sigma_diag: Vec<f64>, angle_wrap: bool) -> Result<Self> {
        Self::new(grid.points(), sigma_diag, angle_wrap)
    }

    pub fn dim(&self) -> usize {
        self.sigma_diag.len()
    }

    pub fn len(&self) -> usize {
        self.centers.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sigma_diag(&self) -> &[f64] {
        &self.sigma_diag
    }

    pub fn angle_wrap(&self) -> bool {
        self.angle_wrap
    }

    pub fn center(&self, j: usize) -> Vector {
        self.centers.column(j).into_owned()
    }

    fn prepare(&self, z: &Vector) -> Vector {
        if self.angle_wrap {
            normalize_state(z)
        } else {
            z.clone()
        }
    }

    fn features_raw(&self, z: &Vector) -> Vector {
        let z = self.prepare(z);
        Vector::from_iterator(
            self.len(),
            self.centers.column_iter().map(|c| {
                let d2: f64 = (0..self.dim()).map(|k| self.sigma_diag[k] * (z[k] - c[k]).powi(2)).sum();
                (-d2).exp()
            }),
        )
    }

    fn jacobian_raw(&self, z: &Vector) -> Matrix {
        let z = self.prepare(z);
        let mut jac = Matrix::zeros(self.len(), self.dim());
        for (j, c) in self.centers.column_iter().enumerate() {
            let d2: f64 = (0..self.dim()).map(|k| self.sigma_diag[k] * (z[k] - c[k]).powi(2)).sum();
            let phi = (-d2).exp();
            for k in 0..self.dim() {
                jac[(j, k)] = -2.0 * phi * self.sigma_diag[k] * (z[k] - c[k]);
            }
        }
        jac
    }
}

/// Feature map shared by the value, advantage, Q, C and policy heads.
#[derive(Clone, Debug, PartialEq)]
pub enum Basis {
    Rbf(RbfBasis),
    /// Monomials `z_i z_j`, `i <= j`, in row-major upper-triangular order.
    Quadratic { dim: usize },
    /// Coordinates `z_i`.
    Linear { dim: usize },
}

impl Basis {
    pub fn input_dim(&self) -> usize {
        match self {
            Basis::Rbf(b) => b.dim(),
            Basis::Quadratic { dim } | Basis::Linear { dim } => *dim,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Basis::Rbf(b) => b.len(),
            Basis::Quadratic { dim } => dim * (dim + 1) / 2,
            Basis::Linear { dim } => *dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, z: &Vector) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(IpiError::InvalidArgument(format!(
                "basis expects inputs of dim {}, got {}",
                self.input_dim(),
                z.len()
            )));
        }
        Ok(())
    }

    /// Feature vector `φ(z)` of length `len()`.
    pub fn features(&self, z: &Vector) -> Result<Vector> {
        self.check(z)?;
        Ok(match self {
            Basis::Rbf(b) => b.features_raw(z),
            Basis::Quadratic { dim } => {
                let mut out = Vector::zeros(self.len());
                let mut k = 0;
                for i in 0..*dim {
                    for j in i..*dim {
                        out[k] = z[i] * z[j];
                        k += 1;
                    }
                }
                out
            }
            Basis::Linear { .. } => z.clone(),
        })
    }

    /// `∂φ/∂z`, `len() x input_dim()`.
    pub fn jacobian(&self, z: &Vector) -> Result<Matrix> {
        self.check(z)?;
        Ok(match self {
            Basis::Rbf(b) => b.jacobian_raw(z),
            Basis::Quadratic { dim } => {
                let mut jac = Matrix::zeros(self.len(), *dim);
                let mut k = 0;
                for i in 0..*dim {
                    for j in i..*dim {
                        jac[(k, i)] += z[j];
                        jac[(k, j)] += z[i];
                        k += 1;
                    }
                }
                jac
            }
            Basis::Linear { dim } => Matrix::identity(*dim, *dim),
        })
    }
}

/// Quadratic-basis weights of `zᵀ M z` for symmetric `M`.
pub fn sym_to_quadratic_weights(m: &Matrix) -> Vector {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(if i == j { m[(i, i)] } else { m[(i, j)] + m[(j, i)] });
        }
    }
    Vector::from_vec(out)
}

/// Symmetric `M` with `zᵀ M z = φ(z)ᵀ θ` for the quadratic basis.
pub fn quadratic_weights_to_sym(theta: &[f64], dim: usize) -> Result<Matrix> {
    if theta.len() != dim * (dim + 1) / 2 {
        return Err(IpiError::InvalidArgument(format!(
            "expected {} quadratic weights, got {}",
            dim * (dim + 1) / 2,
            theta.len()
        )));
    }
    let mut m = Matrix::zeros(dim, dim);
    let mut k = 0;
    for i in 0..dim {
        for j in i..dim {
            if i == j {
                m[(i, i)] = theta[k];
            } else {
                m[(i, j)] = 0.5 * theta[k];
                m[(j, i)] = 0.5 * theta[k];
            }
            k += 1;
        }
    }
    Ok(m)
}

/// `z ↦ W φ(z)` with `W` of shape `output_dim x L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub basis: Arc<Basis>,
    pub weights: Matrix,
}

impl Net {
    pub fn new(basis: Arc<Basis>, weights: Matrix) -> Result<Self> {
        if weights.ncols() != basis.len() || weights.nrows() == 0 {
            return Err(IpiError::InvalidArgument(format!(
                "weights must be k x {}, got {} x {}",
                basis.len(),
                weights.nrows(),
                weights.ncols()
            )));
        }
        Ok(Self { basis, weights })
    }

    pub fn zeros(basis: Arc<Basis>, output_dim: usize) -> Self {
        let l = basis.len();
        Self {
            basis,
            weights: Matrix::zeros(output_dim.max(1), l),
        }
    }

    /// Scalar net from a weight vector.
    pub fn scalar(basis: Arc<Basis>, theta: &Vector) -> Result<Self> {
        Self::new(basis, Matrix::from_row_slice(1, theta.len(), theta.as_slice()))
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.basis.input_dim()
    }

    pub fn eval(&self, z: &Vector) -> Result<Vector> {
        Ok(&self.weights * self.basis.features(z)?)
    }

    pub fn eval_scalar(&self, z: &Vector) -> Result<f64> {
        Ok(self.eval(z)?[0])
    }

    /// Jacobian `output_dim x input_dim`.
    pub fn gradient(&self, z: &Vector) -> Result<Matrix> {
        Ok(&self.weights * self.basis.jacobian(z)?)
    }

    pub fn to_file(&self) -> NetFile {
        let (basis, centers, sigma_diag, angle_wrap, dim) = match self.basis.as_ref() {
            Basis::Rbf(b) => (
                BasisKind::Rbf,
                b.centers.column_iter().map(|c| c.iter().copied().collect()).collect(),
                b.sigma_diag.clone(),
                b.angle_wrap,
                b.dim(),
            ),
            Basis::Quadratic { dim } => (BasisKind::Quadratic, Vec::new(), Vec::new(), false, *dim),
            Basis::Linear { dim } => (BasisKind::Linear, Vec::new(), Vec::new(), false, *dim),
        };
        let mut weights = Vec::with_capacity(self.weights.len());
        for r in 0..self.weights.nrows() {
            weights.extend(self.weights.row(r).iter().copied());
        }
        NetFile {
            basis,
            input_dim: dim,
            centers,
            sigma_diag,
            weights,
            output_dim: self.output_dim(),
            angle_wrap,
        }
    }

    pub fn from_file(file: &NetFile) -> Result<Self> {
        let basis = match file.basis {
            BasisKind::Rbf => Basis::Rbf(RbfBasis::new(
                file.centers.iter().map(|c| Vector::from_column_slice(c)).collect(),
                file.sigma_diag.clone(),
                file.angle_wrap,
            )?),
            BasisKind::Quadratic => Basis::Quadratic { dim: file.input_dim },
            BasisKind::Linear => Basis::Linear { dim: file.input_dim },
        };
        let l = basis.len();
        if file.output_dim == 0 || file.weights.len() != l * file.output_dim {
            return Err(IpiError::InvalidArgument(format!(
                "expected {} weights, got {}",
                l * file.output_dim,
                file.weights.len()
            )));
        }
        Self::new(Arc::new(basis), Matrix::from_row_slice(file.output_dim, l, &file.weights))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    #[default]
    Rbf,
    Quadratic,
    Linear,
}

/// JSON form of a [`Net`]; weights are row-major `output_dim x L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetFile {
    #[serde(default)]
    pub basis: BasisKind,
    #[serde(default)]
    pub input_dim: usize,
    #[serde(default)]
    pub centers: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma_diag: Vec<f64>,
    pub weights: Vec<f64>,
    pub output_dim: usize,
    #[serde(default)]
    pub angle_wrap: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn pendulum_basis(n: usize) -> Arc<Basis> {
        Arc::new(Basis::Rbf(
            RbfBasis::on_grid(&GridSpec::pendulum_states(n).unwrap(), vec![1.0, 0.5], true).unwrap(),
        ))
    }

    #[test]
    fn normalize_examples() {
        let a = normalize_state(&v(&[3.0 * PI, 1.0]));
        assert!((a[0] - PI).abs() < 1e-12 && a[1] == 1.0);
        let b = normalize_state(&v(&[1.1 * PI, 0.0]));
        assert!((b[0] + 0.9 * PI).abs() < 1e-12);
        assert_eq!(normalize_state(&v(&[0.5, -3.0])), v(&[0.5, -3.0]));
    }

    #[test]
    fn grid_counts_and_bounds() {
        let g = GridSpec::pendulum_states(13).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 169);
        assert_eq!(pts[0], v(&[-PI, -6.0]));
        assert_eq!(pts[1][1], -5.0);
        assert_eq!(pts[168], v(&[PI, 6.0]));
        assert_eq!(GridSpec::pendulum_state_actions(13, 5.0).unwrap().points().len(), 2197);
        assert!(GridSpec::new(vec![(0.0, 1.0)], vec![1]).is_err());
        assert!(GridSpec::new(vec![(0.0, f64::INFINITY)], vec![3]).is_err());
    }

    #[test]
    fn rbf_feature_values() {
        let b = RbfBasis::new(vec![v(&[0.0, 0.0])], vec![1.0, 0.5], false).unwrap();
        let basis = Basis::Rbf(b);
        assert_eq!(basis.features(&v(&[0.0, 0.0])).unwrap()[0], 1.0);
        assert!((basis.features(&v(&[1.0, 2.0])).unwrap()[0] - (-3.0f64).exp()).abs() < 1e-15);
        assert!((basis.features(&v(&[1.0, 2.0])).unwrap()[0] - 0.049787).abs() < 1e-6);
        assert!(basis.features(&v(&[5.0, 10.0])).unwrap()[0] < 2e-22);
        assert!(matches!(basis.features(&v(&[1.0])), Err(IpiError::InvalidArgument(_))));
    }

    #[test]
    fn net_eval_examples() {
        let basis = pendulum_basis(5);
        let zero = Net::zeros(basis.clone(), 1);
        assert_eq!(zero.eval_scalar(&v(&[0.3, 1.0])).unwrap(), 0.0);
        assert_eq!(zero.gradient(&v(&[0.3, 1.0])).unwrap(), Matrix::zeros(1, 2));
        let one = Arc::new(Basis::Rbf(RbfBasis::new(vec![v(&[0.5, 1.0])], vec![1.0, 0.5], true).unwrap()));
        let net = Net::scalar(one, &v(&[5.0])).unwrap();
        assert_eq!(net.eval_scalar(&v(&[0.5, 1.0])).unwrap(), 5.0);
        assert!(net.gradient(&v(&[0.5, 1.0])).unwrap().amax() < 1e-15);
    }

    #[test]
    fn net_file_round_trip() {
        let basis = pendulum_basis(4);
        let w = Matrix::from_fn(2, basis.len(), |i, j| (i as f64 + 1.0) * (j as f64).sin());
        let net = Net::new(basis, w).unwrap();
        let json = serde_json::to_string(&net.to_file()).unwrap();
        let back = Net::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert!((&back.weights - &net.weights).amax() < 1e-15);
        assert_eq!(back.basis, net.basis);
        let z = v(&[0.1, 0.2]);
        assert!((back.eval(&z).unwrap() - net.eval(&z).unwrap()).amax() < 1e-15);
    }

    #[test]
    fn net_file_rejects_wrong_weight_count() {
        let mut file = Net::zeros(pendulum_basis(3), 1).to_file();
        file.weights.pop();
        assert!(Net::from_file(&file).is_err());
    }

    #[test]
    fn quadratic_weights_round_trip() {
        let m = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let theta = sym_to_quadratic_weights(&m);
        let basis = Basis::Quadratic { dim: 3 };
        let z = v(&[0.3, -1.2, 2.0]);
        let direct = z.dot(&(&m * &z));
        assert!((basis.features(&z).unwrap().dot(&theta) - direct).abs() < 1e-12);
        assert_eq!(quadratic_weights_to_sym(theta.as_slice(), 3).unwrap(), m);
    }

    fn fd_check(net: &Net, z: &Vector) -> f64 {
        let g = net.gradient(z).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..z.len() {
            let mut p = z.clone();
            let mut m = z.clone();
            p[k] += h;
            m[k] -= h;
            let fd = (net.eval(&p).unwrap() - net.eval(&m).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g.column(k)).amax());
        }
        worst
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn rbf_gradient_matches_finite_difference(
            seed in proptest::collection::vec(-1.0..1.0f64, 3 * 64),
            x1 in -3.0..3.0f64, x2 in -6.0..6.0f64, u in -5.0..5.0f64,
        ) {
            let grid = GridSpec::pendulum_state_actions(4, 5.0).unwrap();
            let basis = Arc::new(Basis::Rbf(RbfBasis::on_grid(&grid, vec![1.0, 0.5, 1.0], true).unwrap()));
            let w = Matrix::from_row_slice(3, 64, &seed);
            let net = Net::new(basis, w).unwrap();
            prop_assert!(fd_check(&net, &v(&[x1, x2, u])) < 1e-6);
        }

        #[test]
        fn quadratic_gradient_matches_finite_difference(
            seed in proptest::collection::vec(-2.0..2.0f64, 6), a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
        ) {
            let net = Net::scalar(Arc::new(Basis::Quadratic { dim: 3 }), &Vector::from_vec(seed)).unwrap();
            prop_assert!(fd_check(&net, &v(&[a, b, c])) < 1e-6);
        }

        #[test]
        fn features_in_unit_interval(x1 in -20.0..20.0f64, x2 in -8.0..8.0f64) {
            let f = pendulum_basis(6).features(&v(&[x1, x2])).unwrap();
            prop_assert!(f.iter().all(|p| *p >= 0.0 && *p <= 1.0));
        }

        #[test]
        fn net_is_periodic_in_angle(x1 in -3.1..3.1f64, x2 in -6.0..6.0f64, k in -3i32..4) {
            let basis = pendulum_basis(5);
            let w = Matrix::from_fn(1, basis.len(), |_, j| ((j * 7) as f64).cos());
            let net = Net::new(basis, w).unwrap();
            let z = v(&[x1, x2]);
            let s = v(&[x1 + 2.0 * PI * k as f64, x2]);
            prop_assert!((net.eval(&z).unwrap() - net.eval(&s).unwrap()).amax() < 1e-9);
            prop_assert!((net.gradient(&z).unwrap() - net.gradient(&s).unwrap()).amax() < 1e-9);
        }
    }

    #[test]
    fn feature_at_own_center_is_one() {
        let basis = pendulum_basis(7);
        if let Basis::Rbf(b) = basis.as_ref() {
            for j in (0..b.len()).step_by(5) {
                let c = b.center(j);
                // Centers on the seam map to +π, which is itself a center.
                if c[0] > -PI {
                    assert!((basis.features(&c).unwrap()[j] - 1.0).abs() < 1e-15);
                }
            }
        }
    }
}
