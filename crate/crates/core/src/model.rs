//! The linear SDE `dX = AX dt + B dW` with a quadratic error weight `M`.

use crate::error::{Error, ModelViolation, Result};
use crate::matfun::{self, Matrix};

/// Relative tolerance on the smallest eigenvalue in PSD tests.
const PSD_TOL: f64 = 1e-10;

/// Dynamics `A` (n×n), dispersion `B` (n×m), weight `M` (n×n, symmetric PSD)
/// and horizon `T`. The diffusion matrix `D = B B^T` is cached.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSdeModel {
    a: Matrix,
    b: Matrix,
    m: Matrix,
    d: Matrix,
    horizon: f64,
}

impl LinearSdeModel {
    pub fn new(a: Matrix, b: Matrix, m: Matrix, horizon: f64) -> Result<Self> {
        let d = matfun::symmetrize(&(&b * b.transpose()));
        let model = Self { a, b, m, d, horizon };
        model.validate()?;
        Ok(model)
    }

    /// Scalar Ornstein-Uhlenbeck model with unit weight.
    pub fn scalar(a: f64, b: f64, horizon: f64) -> Result<Self> {
        Self::new(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Matrix::from_element(1, 1, 1.0),
            horizon,
        )
    }

    /// Same dynamics over a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.m.clone(), horizon)
    }

    /// Same dynamics with a different weight.
    pub fn with_weight(&self, m: Matrix) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), m, self.horizon)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        let n = self.a.nrows();
        if n == 0 {
            violations.push(ModelViolation::EmptyState);
        }
        if self.b.ncols() == 0 {
            violations.push(ModelViolation::EmptyNoise);
        }
        if self.a.ncols() != n {
            violations.push(ModelViolation::DynamicsNotSquare {
                rows: n,
                cols: self.a.ncols(),
            });
        }
        if self.b.nrows() != n {
            violations.push(ModelViolation::DispersionRows {
                expected: n,
                found: self.b.nrows(),
            });
        }
        if self.m.nrows() != n || self.m.ncols() != n {
            violations.push(ModelViolation::WeightShape {
                expected: n,
                rows: self.m.nrows(),
                cols: self.m.ncols(),
            });
        }
        for (name, x) in [("A", &self.a), ("B", &self.b), ("M", &self.m)] {
            if x.iter().any(|v| !v.is_finite()) {
                violations.push(ModelViolation::NonFinite(name));
            }
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            violations.push(ModelViolation::Horizon(self.horizon));
        }
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }

        if !matfun::is_symmetric(&self.m) {
            violations.push(ModelViolation::WeightNotSymmetric);
        } else {
            let min = matfun::min_eigenvalue(&self.m);
            if min < -PSD_TOL * self.m.norm() {
                violations.push(ModelViolation::WeightNotPsd { min_eigenvalue: min });
            }
        }
        let recomputed = &self.b * self.b.transpose();
        let min = matfun::min_eigenvalue(&self.d);
        if (&recomputed - &self.d).norm() > 1e-12 * (1.0 + recomputed.norm())
            || min < -PSD_TOL * self.d.norm()
        {
            violations.push(ModelViolation::DiffusionNotPsd { min_eigenvalue: min });
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn dynamics(&self) -> &Matrix {
        &self.a
    }

    pub fn dispersion(&self) -> &Matrix {
        &self.b
    }

    pub fn weight(&self) -> &Matrix {
        &self.m
    }

    pub fn diffusion(&self) -> &Matrix {
        &self.d
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `(1/12) A D A^T`.
    pub fn mho(&self) -> Matrix {
        matfun::mho(&self.a, &self.d).expect("validated model")
    }

    /// True for a scalar model with `A < 0`, `B != 0` and `M = 1`.
    pub fn is_scalar_ou(&self) -> bool {
        self.state_dim() == 1
            && self.noise_dim() == 1
            && self.a[(0, 0)] < 0.0
            && self.b[(0, 0)] != 0.0
            && self.m[(0, 0)] == 1.0
    }
}

/// Outcome of the nondegeneracy test required for optimal grids to exist.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    /// `(j, k)` entry `<M, A^j D (A^T)^k>`, `1 <= j, k <= n`.
    pub gram_matrix: Matrix,
    pub gram_det: f64,
    pub satisfied: bool,
}

/// Gram matrix of `sqrt(M) A^k B`, `k = 1..n`, and the sign of its determinant.
pub fn regularity_check(model: &LinearSdeModel) -> RegularityReport {
    let n = model.state_dim();
    let a = model.dynamics();
    let mut left = Vec::with_capacity(n);
    let mut power = a.clone();
    for _ in 0..n {
        left.push(power.clone());
        power = a * power;
    }
    let mut gram = Matrix::zeros(n, n);
    for j in 0..n {
        let ad = &left[j] * model.diffusion();
        for k in 0..n {
            let term = &ad * left[k].transpose();
            gram[(j, k)] = frobenius(model.weight(), &term);
        }
    }
    let gram = matfun::symmetrize(&gram);
    let gram_det = gram.clone().lu().determinant();
    RegularityReport {
        gram_matrix: gram,
        gram_det,
        satisfied: gram_det > 0.0,
    }
}

fn frobenius(k: &Matrix, l: &Matrix) -> f64 {
    k.iter().zip(l.iter()).map(|(x, y)| x * y).sum()
}

/// `<K, L> = Tr(K^T L)`.
pub fn frobenius_pairing(k: &Matrix, l: &Matrix) -> Result<f64> {
    if k.shape() != l.shape() {
        return Err(Error::DimensionMismatch(format!(
            "pairing of {:?} with {:?}",
            k.shape(),
            l.shape()
        )));
    }
    Ok(frobenius(k, l))
}
